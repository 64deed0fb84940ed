//! Vertical grids for a single atmospheric column.
//!
//! A grid is a strictly increasing list of interface heights starting at the
//! ground, `z_0 = 0 < z_1 < ... < z_M`. Cell `m` spans `[z_m, z_{m+1}]`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Interface heights of the lowest 25 cells of the ECMWF IFS 137-level grid.
pub const IFS_L137_LOWEST_25: &str = include_str!("../data/ifs_l137_lowest25.txt");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerticalGrid {
    interfaces: Vec<f64>,
    cell_sizes: Vec<f64>,
    centers: Vec<f64>,
}

/// Law used for the stretched block of [`VerticalGrid::stretched`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StretchLaw {
    #[default]
    Geometric,
}

impl VerticalGrid {
    /// Builds a grid from interface heights, validating the invariants.
    pub fn from_interfaces(interfaces: Vec<f64>) -> Result<Self> {
        if interfaces.len() < 3 {
            return Err(Error::Grid(format!("need at least 3 interfaces (2 cells), got {}", interfaces.len())));
        }
        if let Some(z) = interfaces.iter().find(|z| !z.is_finite()) {
            return Err(Error::Grid(format!("non-finite height {z}")));
        }
        if interfaces[0] != 0.0 {
            return Err(Error::Grid(format!("first interface must be 0, got {}", interfaces[0])));
        }
        for (m, w) in interfaces.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::Grid(format!(
                    "heights must be strictly increasing: z_{} = {} >= z_{} = {}",
                    m,
                    w[0],
                    m + 1,
                    w[1]
                )));
            }
        }
        let cell_sizes = interfaces.windows(2).map(|w| w[1] - w[0]).collect();
        let centers = interfaces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(VerticalGrid { interfaces, cell_sizes, centers })
    }

    /// `n_cells` equal cells spanning `[0, column_height]`.
    pub fn uniform(n_cells: usize, column_height: f64) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::Grid(format!("need at least 2 cells, got {n_cells}")));
        }
        if !(column_height > 0.0) || !column_height.is_finite() {
            return Err(Error::Grid(format!("column height must be positive, got {column_height}")));
        }
        let h = column_height / n_cells as f64;
        let mut z: Vec<f64> = (0..=n_cells).map(|m| m as f64 * h).collect();
        z[n_cells] = column_height;
        Self::from_interfaces(z)
    }

    /// A block of `uniform_cells` cells of size `uniform_size` topped by
    /// `stretched_cells` cells growing geometrically up to exactly `top_height`.
    ///
    /// The stretched cells have sizes `uniform_size * r^k`, `k = 1..=stretched_cells`,
    /// with the ratio `r >= 1` found by bisection.
    pub fn stretched(
        uniform_cells: usize,
        uniform_size: f64,
        stretched_cells: usize,
        top_height: f64,
        law: StretchLaw,
    ) -> Result<Self> {
        let StretchLaw::Geometric = law;
        if !(uniform_size > 0.0) || !uniform_size.is_finite() {
            return Err(Error::Grid(format!("uniform cell size must be positive, got {uniform_size}")));
        }
        if uniform_cells + stretched_cells < 2 {
            return Err(Error::Grid("need at least 2 cells".into()));
        }
        let base = uniform_cells as f64 * uniform_size;
        let mut z: Vec<f64> = (0..=uniform_cells).map(|m| m as f64 * uniform_size).collect();
        if stretched_cells == 0 {
            if (top_height - base).abs() > 1e-9 * top_height.abs().max(1.0) {
                return Err(Error::Grid(format!(
                    "empty stretched block but top {top_height} differs from uniform extent {base}"
                )));
            }
            return Self::from_interfaces(z);
        }
        if !(top_height > base) {
            return Err(Error::Grid(format!("top height {top_height} must exceed the uniform block extent {base}")));
        }
        let ratio = geometric_ratio(uniform_size, stretched_cells, top_height - base)?;
        let mut size = uniform_size;
        let mut top = base;
        for _ in 0..stretched_cells {
            size *= ratio;
            top += size;
            z.push(top);
        }
        *z.last_mut().unwrap() = top_height;
        Self::from_interfaces(z)
    }

    /// Grid with exactly the given interface heights.
    pub fn load_levels(heights: &[f64]) -> Result<Self> {
        if let Some(z) = heights.iter().find(|z| **z < 0.0) {
            return Err(Error::Grid(format!("negative height {z}")));
        }
        Self::from_interfaces(heights.to_vec())
    }

    /// Parses the grid file format: one interface height per line in meters,
    /// ascending, first value 0. Blank lines and lines starting with `#` are ignored.
    pub fn parse_levels(text: &str, source: &str) -> Result<Self> {
        let mut heights = Vec::new();
        let mut first_line = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let z: f64 = line.parse().map_err(|_| Error::GridFile {
                path: source.to_string(),
                line: i + 1,
                msg: format!("cannot parse '{line}' as a height"),
            })?;
            if !z.is_finite() || z < 0.0 {
                return Err(Error::GridFile {
                    path: source.to_string(),
                    line: i + 1,
                    msg: format!("height must be finite and non-negative, got {z}"),
                });
            }
            if let Some(&prev) = heights.last() {
                if z <= prev {
                    return Err(Error::GridFile {
                        path: source.to_string(),
                        line: i + 1,
                        msg: format!("height {z} not above previous {prev}"),
                    });
                }
            }
            first_line.get_or_insert(i + 1);
            heights.push(z);
        }
        if heights.first().is_some_and(|&z| z != 0.0) {
            return Err(Error::GridFile {
                path: source.to_string(),
                line: first_line.unwrap_or(1),
                msg: "first height must be 0".into(),
            });
        }
        Self::load_levels(&heights)
    }

    pub fn read_levels(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_levels(&text, &path.display().to_string())
    }

    /// The lowest 25 cells of the IFS L137 grid, from the bundled data file.
    pub fn ifs_l137_lowest_25() -> Self {
        Self::parse_levels(IFS_L137_LOWEST_25, "ifs_l137_lowest25.txt").expect("bundled IFS level file is valid")
    }

    /// Serializes to the grid file format. Heights use the shortest
    /// representation that round-trips exactly.
    pub fn to_levels_text(&self) -> String {
        let mut out = String::with_capacity(self.interfaces.len() * 12);
        for z in &self.interfaces {
            let _ = writeln!(out, "{z:?}");
        }
        out
    }

    pub fn write_levels(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_levels_text()).map_err(|e| Error::io(path, e))
    }

    /// Splits every cell into `factor` equal sub-cells.
    pub fn refine(&self, factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::Grid(format!("refinement factor must be >= 2, got {factor}")));
        }
        let mut z = Vec::with_capacity(self.n_cells() * factor + 1);
        for w in self.interfaces.windows(2) {
            let h = w[1] - w[0];
            z.push(w[0]);
            for j in 1..factor {
                z.push(w[0] + h * j as f64 / factor as f64);
            }
        }
        z.push(self.top());
        Self::from_interfaces(z)
    }

    pub fn n_cells(&self) -> usize {
        self.cell_sizes.len()
    }

    pub fn interfaces(&self) -> &[f64] {
        &self.interfaces
    }

    pub fn cell_sizes(&self) -> &[f64] {
        &self.cell_sizes
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn top(&self) -> f64 {
        *self.interfaces.last().unwrap()
    }

    /// Index of the cell containing `z`, with `z_m <= z < z_{m+1}`.
    /// The top interface belongs to the last cell.
    pub fn cell_containing(&self, z: f64) -> Option<usize> {
        if !(z >= 0.0) || z > self.top() {
            return None;
        }
        let idx = self.interfaces.partition_point(|&zi| zi <= z);
        Some((idx - 1).min(self.n_cells() - 1))
    }
}

/// Ratio `r >= 1` with `size * (r + r^2 + ... + r^n) = span`, by bisection.
fn geometric_ratio(size: f64, n: usize, span: f64) -> Result<f64> {
    let total = |r: f64| -> f64 {
        let mut acc = 0.0;
        let mut p = 1.0;
        for _ in 0..n {
            p *= r;
            acc += p;
        }
        size * acc
    };
    if total(1.0) > span * (1.0 + 1e-12) {
        return Err(Error::Grid(format!("{n} stretched cells cannot span {span} m without shrinking below {size} m")));
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while total(hi) < span {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Grid("stretch ratio diverged".into()));
        }
    }
    while hi - lo > 1e-12 * lo {
        let mid = 0.5 * (lo + hi);
        if total(mid) < span {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
