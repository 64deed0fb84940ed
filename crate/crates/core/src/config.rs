//! TOML run configuration.
//!
//! Every table rejects unknown keys. Omitted keys take the defaults of the
//! neutral experiment. A minimal file:
//!
//! ```toml
//! case = "neutral"
//!
//! [grid]
//! kind = "ifs_l137"
//!
//! [scheme]
//! kind = "fvfree"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::closure::TkeConstants;
use crate::dynamics::{
    BottomBoundary, BottomViscosity, SimulationConfig, Stratification, SurfaceForcing, ThetaProfile, TopBoundary,
    Viscosity,
};
use crate::error::{Error, Result};
use crate::grid::{StretchLaw, VerticalGrid};
use crate::harness::{Case, ExperimentConfig};
use crate::surface::{MoParameters, SchemeKind};

pub const NEUTRAL_TOML: &str = include_str!("../../../configs/neutral.toml");
pub const STABLE_TOML: &str = include_str!("../../../configs/stable.toml");
pub const UNSTABLE_TOML: &str = include_str!("../../../configs/unstable.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_case")]
    pub case: Case,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    pub grid: GridSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub viscosity: ViscositySection,
    #[serde(default)]
    pub stratification: StratificationSection,
    #[serde(default)]
    pub surface: MoParameters,
    #[serde(default)]
    pub closure: TkeConstants,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

fn default_case() -> Case {
    Case::Neutral
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub dt: f64,
    pub duration: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { dt: 30.0, duration: 86_400.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub coriolis: f64,
    /// `[real, imaginary]`, m/s.
    pub geostrophic_wind: [f64; 2],
    pub initial_wind: [f64; 2],
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection { coriolis: 1e-4, geostrophic_wind: [8.0, 0.0], initial_wind: [8.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSection {
    Uniform {
        cells: usize,
        height: f64,
    },
    Stretched {
        uniform_cells: usize,
        uniform_size: f64,
        stretched_cells: usize,
        top: f64,
    },
    /// Interface heights inline or from a levels file, relative to the config file.
    Levels {
        #[serde(default)]
        heights: Option<Vec<f64>>,
        #[serde(default)]
        file: Option<PathBuf>,
    },
    #[serde(rename = "ifs_l137")]
    IfsL137,
}

impl GridSection {
    pub fn build(&self, base_dir: Option<&Path>) -> Result<VerticalGrid> {
        match self {
            GridSection::Uniform { cells, height } => VerticalGrid::uniform(*cells, *height),
            GridSection::Stretched { uniform_cells, uniform_size, stretched_cells, top } => {
                VerticalGrid::stretched(*uniform_cells, *uniform_size, *stretched_cells, *top, StretchLaw::Geometric)
            }
            GridSection::Levels { heights: Some(h), file: None } => VerticalGrid::load_levels(h),
            GridSection::Levels { heights: None, file: Some(f) } => {
                let path = match base_dir {
                    Some(d) if f.is_relative() => d.join(f),
                    _ => f.clone(),
                };
                VerticalGrid::read_levels(&path)
            }
            GridSection::Levels { .. } => Err(Error::Config("grid: give exactly one of `heights` or `file`".into())),
            GridSection::IfsL137 => Ok(VerticalGrid::ifs_l137_lowest_25()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomKind {
    Surface,
    NoSlip,
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKind {
    ZeroFlux,
    Geostrophic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomViscosityKind {
    SurfaceLayer,
    Molecular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub kind: SchemeKind,
    pub delta_a: Option<f64>,
    pub sub_iterations: usize,
    pub bottom: BottomKind,
    pub top: TopKind,
    pub bottom_viscosity: BottomViscosityKind,
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            kind: SchemeKind::FvFree,
            delta_a: None,
            sub_iterations: 1,
            bottom: BottomKind::Surface,
            top: TopKind::ZeroFlux,
            bottom_viscosity: BottomViscosityKind::SurfaceLayer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViscositySection {
    /// Constant viscosity and diffusivity in m^2/s; the TKE closure when absent.
    pub constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StratificationSection {
    #[default]
    Neutral,
    Stratified {
        theta_initial: f64,
        #[serde(default)]
        mixed_depth: f64,
        #[serde(default)]
        lapse_rate: f64,
        surface_start: f64,
        #[serde(default)]
        surface_trend: f64,
        #[serde(default)]
        surface_amplitude: f64,
        #[serde(default = "default_period")]
        surface_period: f64,
    },
}

fn default_period() -> f64 {
    86_400.0
}

impl StratificationSection {
    fn build(&self) -> Stratification {
        match *self {
            StratificationSection::Neutral => Stratification::Neutral,
            StratificationSection::Stratified {
                theta_initial,
                mixed_depth,
                lapse_rate,
                surface_start,
                surface_trend,
                surface_amplitude,
                surface_period,
            } => Stratification::Stratified {
                initial: ThetaProfile { value: theta_initial, mixed_depth, lapse_rate },
                surface: SurfaceForcing {
                    start: surface_start,
                    trend: surface_trend,
                    amplitude: surface_amplitude,
                    period: surface_period,
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub refinement: usize,
    pub near_surface_height: f64,
    pub schemes: Vec<SchemeKind>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { refinement: 3, near_surface_height: 200.0, schemes: SchemeKind::ALL.to_vec() }
    }
}

/// A parsed file together with the directory its relative paths refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub file: ConfigFile,
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML text. Errors carry the line and key of the offending entry.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        let cfg = RunConfig { file, base_dir: base_dir.map(Path::to_path_buf) };
        cfg.simulation()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent()).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// One of the configurations shipped with the crate.
    pub fn shipped(case: Case) -> Self {
        let text = match case {
            Case::Neutral => NEUTRAL_TOML,
            Case::Stable => STABLE_TOML,
            Case::Unstable => UNSTABLE_TOML,
        };
        Self::parse(text, None).expect("shipped configuration is valid")
    }

    pub fn simulation(&self) -> Result<SimulationConfig> {
        let f = &self.file;
        let s = &f.scheme;
        let config = SimulationConfig {
            coriolis: f.physics.coriolis,
            geostrophic_wind: Complex64::new(f.physics.geostrophic_wind[0], f.physics.geostrophic_wind[1]),
            initial_wind: Complex64::new(f.physics.initial_wind[0], f.physics.initial_wind[1]),
            dt: f.time.dt,
            duration: f.time.duration,
            scheme: s.kind,
            delta_a: s.delta_a,
            grid: f.grid.build(self.base_dir.as_deref())?,
            stratification: f.stratification.build(),
            mo: f.surface,
            closure: f.closure,
            viscosity: f.viscosity.constant.map_or(Viscosity::Closure, Viscosity::Constant),
            bottom: match s.bottom {
                BottomKind::Surface => BottomBoundary::Surface,
                BottomKind::NoSlip => BottomBoundary::NoSlip,
                BottomKind::ZeroFlux => BottomBoundary::ZeroFlux,
            },
            top: match s.top {
                TopKind::ZeroFlux => TopBoundary::ZeroFlux,
                TopKind::Geostrophic => TopBoundary::Geostrophic,
            },
            bottom_viscosity: match s.bottom_viscosity {
                BottomViscosityKind::SurfaceLayer => BottomViscosity::SurfaceLayer,
                BottomViscosityKind::Molecular => BottomViscosity::Molecular,
            },
            sub_iterations: s.sub_iterations,
        };
        config.validate().map_err(|e| match e {
            Error::Parameter(m) | Error::Unsupported(m) => Error::Config(m),
            other => other,
        })?;
        Ok(config)
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let e = &self.file.experiment;
        if e.refinement < 2 {
            return Err(Error::Config(format!("experiment.refinement must be at least 2, got {}", e.refinement)));
        }
        if !(e.near_surface_height > 0.0) {
            return Err(Error::Config("experiment.near_surface_height must be positive".into()));
        }
        Ok(ExperimentConfig {
            case: self.file.case,
            base: self.simulation()?,
            refinement: e.refinement,
            near_surface_height: e.near_surface_height,
        })
    }

    pub fn schemes(&self) -> &[SchemeKind] {
        &self.file.experiment.schemes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_parse() {
        for case in Case::ALL {
            let c = RunConfig::shipped(case);
            assert_eq!(c.file.case, case);
            let sim = c.simulation().unwrap();
            assert_eq!(sim.dt, 30.0);
            assert_eq!(sim.coriolis, 1e-4);
            assert_eq!(sim.geostrophic_wind, Complex64::new(8.0, 0.0));
        }
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let text = "[grid]\nkind = \"uniform\"\ncells = 10\nheight = 100.0\n\n[time]\ndt = 30.0\ndtt = 5.0\n";
        let err = RunConfig::parse(text, None).unwrap_err().to_string();
        assert!(err.contains("dtt"), "{err}");
        assert!(err.contains("line 8"), "{err}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let text = "[grid]\nkind = \"uniform\"\ncells = 10\nheight = 100.0\n[time]\ndt = -1.0\n";
        assert!(matches!(RunConfig::parse(text, None), Err(Error::Config(_))));
    }

    #[test]
    fn levels_need_one_source() {
        let text = "[grid]\nkind = \"levels\"\n";
        assert!(matches!(RunConfig::parse(text, None), Err(Error::Config(_))));
        let text = "[grid]\nkind = \"levels\"\nheights = [0.0, 1.0, 3.0]\n";
        assert_eq!(RunConfig::parse(text, None).unwrap().simulation().unwrap().grid.n_cells(), 2);
    }
}
