use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building grids, solving the column or running experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("grid file {path}:{line}: {msg}")]
    GridFile { path: String, line: usize, msg: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },

    #[error("point z = {z} m outside [{lo}, {hi}]")]
    OutOfDomain { z: f64, lo: f64, hi: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("non-finite state at step {step}: {what}")]
    NonFinite { step: usize, what: String },

    #[error("config: {0}")]
    Config(String),

    #[error("non-nested grids: {0}")]
    NotNested(String),

    #[error("{0}")]
    Failed(String),

    #[error("reference is zero everywhere")]
    FullyMasked,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Broad category used by the command-line front end to pick an exit code.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::GridFile { .. }
            | Error::Grid(_)
            | Error::Parameter(_)
            | Error::Unsupported(_)
            | Error::NotNested(_) => ErrorCategory::Config,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerics,
    Io,
}

impl ErrorCategory {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Numerics => "numerics",
            ErrorCategory::Io => "io",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Numerics => 3,
            ErrorCategory::Io => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
