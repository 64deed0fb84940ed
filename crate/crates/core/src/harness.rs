//! Low- versus high-resolution consistency experiments and their outputs.
//!
//! Every report pairs a run on the configured grid with a run on the same grid
//! refined by an integer factor. High-resolution profiles are aggregated back
//! onto the coarse cells before they are compared.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    integrate, BottomBoundary, BottomViscosity, Column, Sampling, SimulationConfig, Stratification, TopBoundary,
    Viscosity,
};
use crate::error::{Error, Result};
use crate::grid::VerticalGrid;
use crate::scalar::Scalar;
use crate::spline::{interface_derivatives, BoundaryRow};
use crate::surface::{first_interface_k0_term, mo_viscosity, SchemeKind};

/// Version of the CSV and summary layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Neutral,
    Stable,
    Unstable,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::Neutral, Case::Stable, Case::Unstable];

    pub fn name(self) -> &'static str {
        match self {
            Case::Neutral => "neutral",
            Case::Stable => "stable",
            Case::Unstable => "unstable",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown case `{s}` (expected neutral, stable or unstable)")))
    }
}

/// One consistency experiment: physics on the low-resolution grid plus the
/// refinement used for its high-resolution twin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Low-resolution run; its scheme is replaced per report.
    pub base: SimulationConfig,
    pub refinement: usize,
    /// Upper bound of the near-surface band used in the summary statistics.
    pub near_surface_height: f64,
}

impl ExperimentConfig {
    /// Low- and high-resolution configurations for `scheme`. The free scheme
    /// keeps the low-resolution surface-layer height in both runs; the others
    /// let each grid set it.
    pub fn paired_configs(&self, scheme: SchemeKind) -> Result<(SimulationConfig, SimulationConfig)> {
        let mut low = self.base.clone();
        low.scheme = scheme;
        let mut high = low.clone();
        high.grid = self.base.grid.refine(self.refinement)?;
        if scheme == SchemeKind::FvFree {
            let d = scheme.surface_layer_height(&low.grid, self.base.delta_a);
            low.delta_a = Some(d);
            high.delta_a = Some(d);
        } else {
            low.delta_a = None;
            high.delta_a = None;
        }
        Ok((low, high))
    }
}

/// SHA-256 of a configuration with the surface coupling blanked out, so runs
/// that differ only in their bottom row share a hash.
pub fn physics_hash(config: &SimulationConfig) -> String {
    let mut c = config.clone();
    c.scheme = SchemeKind::Fd;
    c.delta_a = None;
    let json = serde_json::to_vec(&c).expect("configuration serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Size-weighted aggregation of a fine-grid field onto a nested coarse grid.
pub fn project_to_coarse<T: Scalar>(fine: &VerticalGrid, coarse: &VerticalGrid, field: &[T]) -> Result<Vec<T>> {
    if field.len() != fine.n_cells() {
        return Err(Error::Dimension(format!("{} values on {} fine cells", field.len(), fine.n_cells())));
    }
    let zf = fine.interfaces();
    let hf = fine.cell_sizes();
    let tol = 1e-9 * fine.top().abs().max(1.0);
    let mut out = Vec::with_capacity(coarse.n_cells());
    let mut i = zf
        .iter()
        .position(|z| (z - coarse.interfaces()[0]).abs() <= tol)
        .ok_or_else(|| Error::NotNested(format!("coarse interface {} not on the fine grid", coarse.interfaces()[0])))?;
    for (c, w) in coarse.interfaces().windows(2).enumerate() {
        let start = i;
        let mut acc = T::zero();
        while i < fine.n_cells() && zf[i + 1] <= w[1] + tol {
            acc += field[i] * hf[i];
            i += 1;
        }
        if i == start || (zf[i] - w[1]).abs() > tol {
            return Err(Error::NotNested(format!("coarse interface {} not on the fine grid", w[1])));
        }
        out.push(acc / coarse.cell_sizes()[c]);
    }
    Ok(out)
}

/// `|a - b| / |b|` entrywise; entries with a zero or non-finite reference are
/// masked as `None`.
pub fn relative_difference(a: &[f64], b: &[f64]) -> Result<Vec<Option<f64>>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("relative difference of {} and {} values", a.len(), b.len())));
    }
    let out: Vec<Option<f64>> = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs() / y.abs();
            (y.abs() > 0.0 && d.is_finite()).then_some(d)
        })
        .collect();
    if !out.is_empty() && out.iter().all(Option::is_none) {
        return Err(Error::FullyMasked);
    }
    Ok(out)
}

/// Median of the unmasked values; the mean of the two middle values for even counts.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(values: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn max(values: &[Option<f64>]) -> Option<f64> {
    values.iter().flatten().copied().reduce(f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetrics {
    pub u_star_initial: Option<f64>,
    pub u_star_mean: Option<f64>,
    pub u_star_max: Option<f64>,
    /// Median per-level wind-speed difference over cells centered below the near-surface height.
    pub near_surface_median: Option<f64>,
    pub near_surface_max: Option<f64>,
    pub profile_median: Option<f64>,
    pub masked_levels: usize,
    pub masked_times: usize,
    pub max_budget_residual: f64,
    pub max_continuity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMetadata {
    pub low_cells: usize,
    pub high_cells: usize,
    pub delta_a_low: f64,
    pub delta_a_high: f64,
    pub physics_hash_low: String,
    pub physics_hash_high: String,
    pub unconverged_bulk_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub case: Case,
    pub scheme: SchemeKind,
    pub times: Vec<f64>,
    pub u_star_low: Vec<f64>,
    pub u_star_high: Vec<f64>,
    pub u_star_rel_diff: Vec<Option<f64>>,
    /// Low-resolution cell centers.
    pub z: Vec<f64>,
    pub speed_low: Vec<f64>,
    /// High-resolution wind aggregated onto the low-resolution cells.
    pub speed_high: Vec<f64>,
    pub speed_rel_diff: Vec<Option<f64>>,
    pub theta_low: Option<Vec<f64>>,
    pub theta_high: Option<Vec<f64>>,
    pub metrics: ReportMetrics,
    pub metadata: ReportMetadata,
}

/// Runs the paired simulations for one scheme and compares them.
pub fn run_experiment(exp: &ExperimentConfig, scheme: SchemeKind) -> Result<ConsistencyReport> {
    let (low_cfg, high_cfg) = exp.paired_configs(scheme)?;
    let (low, high) =
        rayon::join(|| integrate(&low_cfg, Sampling::default()), || integrate(&high_cfg, Sampling::default()));
    let (low, high) = (low?, high?);

    let u_star_rel_diff = relative_difference(&low.u_star, &high.u_star)?;
    let lo = low.final_snapshot();
    let hi = high.final_snapshot();
    let wind_high: Vec<Complex64> = project_to_coarse(&high_cfg.grid, &low_cfg.grid, &hi.wind)?;
    let speed_low: Vec<f64> = lo.wind.iter().map(|u| u.norm()).collect();
    let speed_high: Vec<f64> = wind_high.iter().map(|u| u.norm()).collect();
    let speed_rel_diff = relative_difference(&speed_low, &speed_high)?;
    let theta_high = match &hi.theta {
        Some(t) => Some(project_to_coarse(&high_cfg.grid, &low_cfg.grid, t)?),
        None => None,
    };
    let theta_low = lo.theta.clone();
    let z = low_cfg.grid.centers().to_vec();
    let near: Vec<Option<f64>> =
        z.iter().zip(&speed_rel_diff).filter(|(z, _)| **z < exp.near_surface_height).map(|(_, d)| *d).collect();

    let metrics = ReportMetrics {
        u_star_initial: u_star_rel_diff.first().copied().flatten(),
        u_star_mean: mean(&u_star_rel_diff),
        u_star_max: max(&u_star_rel_diff),
        near_surface_median: median(&near),
        near_surface_max: max(&near),
        profile_median: median(&speed_rel_diff),
        masked_levels: speed_rel_diff.iter().filter(|d| d.is_none()).count(),
        masked_times: u_star_rel_diff.iter().filter(|d| d.is_none()).count(),
        max_budget_residual: low.max_budget_residual.max(high.max_budget_residual),
        max_continuity: low.max_continuity.max(high.max_continuity),
    };
    let metadata = ReportMetadata {
        low_cells: low_cfg.grid.n_cells(),
        high_cells: high_cfg.grid.n_cells(),
        delta_a_low: low_cfg.surface_layer_height(),
        delta_a_high: high_cfg.surface_layer_height(),
        physics_hash_low: physics_hash(&low_cfg),
        physics_hash_high: physics_hash(&high_cfg),
        unconverged_bulk_steps: low.unconverged_bulk_steps + high.unconverged_bulk_steps,
    };
    Ok(ConsistencyReport {
        case: exp.case,
        scheme,
        times: low.times,
        u_star_low: low.u_star,
        u_star_high: high.u_star,
        u_star_rel_diff,
        z,
        speed_low,
        speed_high,
        speed_rel_diff,
        theta_low,
        theta_high,
        metrics,
        metadata,
    })
}

/// Outcome of one (case, scheme) cell of a sweep.
#[derive(Debug)]
pub struct SweepEntry {
    pub case: Case,
    pub scheme: SchemeKind,
    pub outcome: Result<ConsistencyReport>,
}

/// Runs every experiment for every scheme in parallel. Failures are kept in
/// place; the order follows the inputs.
pub fn run_all(experiments: &[ExperimentConfig], schemes: &[SchemeKind]) -> Vec<SweepEntry> {
    let jobs: Vec<(&ExperimentConfig, SchemeKind)> =
        experiments.iter().flat_map(|e| schemes.iter().map(move |s| (e, *s))).collect();
    jobs.par_iter().map(|(e, s)| SweepEntry { case: e.case, scheme: *s, outcome: run_experiment(e, *s) }).collect()
}

/// High-resolution physics hashes of one case must agree across schemes.
pub fn check_shared_physics(entries: &[SweepEntry]) -> Result<()> {
    let mut seen: BTreeMap<Case, &str> = BTreeMap::new();
    for e in entries {
        if let Ok(r) = &e.outcome {
            let h = r.metadata.physics_hash_high.as_str();
            match seen.get(&e.case) {
                Some(prev) if *prev != h => {
                    return Err(Error::Config(format!(
                        "{} high-resolution runs differ beyond the surface scheme",
                        e.case
                    )));
                }
                _ => {
                    seen.insert(e.case, h);
                }
            }
        }
    }
    Ok(())
}

fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_csv(path: &Path, axis: &str, scheme: SchemeKind, rows: &[(f64, &str, Option<f64>)]) -> Result<()> {
    let mut w = open_csv(path)?;
    w.write_record([axis, "scheme", "resolution", "value"])?;
    for (x, res, v) in rows {
        w.write_record([x.to_string(), scheme.name().to_string(), res.to_string(), fmt_value(*v)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes `{case}_{scheme}_{kind}.csv` for every series of the report.
/// Masked relative differences are left empty.
pub fn write_report(dir: &Path, r: &ConsistencyReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = |kind: &str| dir.join(format!("{}_{}_{}.csv", r.case, r.scheme, kind));

    let mut rows = Vec::with_capacity(2 * r.times.len());
    for (t, v) in r.times.iter().zip(&r.u_star_low) {
        rows.push((*t, "low", Some(*v)));
    }
    for (t, v) in r.times.iter().zip(&r.u_star_high) {
        rows.push((*t, "high", Some(*v)));
    }
    write_csv(&name("ustar"), "time_s", r.scheme, &rows)?;

    let rows: Vec<_> = r.times.iter().zip(&r.u_star_rel_diff).map(|(t, d)| (*t, "relative", *d)).collect();
    write_csv(&name("ustar_reldiff"), "time_s", r.scheme, &rows)?;

    let mut rows = Vec::with_capacity(2 * r.z.len());
    for (z, v) in r.z.iter().zip(&r.speed_low) {
        rows.push((*z, "low", Some(*v)));
    }
    for (z, v) in r.z.iter().zip(&r.speed_high) {
        rows.push((*z, "high", Some(*v)));
    }
    write_csv(&name("profile"), "z_m", r.scheme, &rows)?;

    let rows: Vec<_> = r.z.iter().zip(&r.speed_rel_diff).map(|(z, d)| (*z, "relative", *d)).collect();
    write_csv(&name("profile_reldiff"), "z_m", r.scheme, &rows)?;

    if let (Some(lo), Some(hi)) = (&r.theta_low, &r.theta_high) {
        let mut rows = Vec::with_capacity(2 * r.z.len());
        for (z, v) in r.z.iter().zip(lo) {
            rows.push((*z, "low", Some(*v)));
        }
        for (z, v) in r.z.iter().zip(hi) {
            rows.push((*z, "high", Some(*v)));
        }
        write_csv(&name("theta"), "z_m", r.scheme, &rows)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryEntry<'a> {
    case: Case,
    scheme: SchemeKind,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<&'a ReportMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metadata: Option<&'a ReportMetadata>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema_version: u32,
    masking: &'static str,
    near_surface_metric: &'static str,
    reports: Vec<SummaryEntry<'a>>,
    /// Schemes per case ordered by near-surface median, best first.
    ranking: BTreeMap<Case, Vec<SchemeKind>>,
}

/// Schemes of each case sorted by near-surface median relative difference.
pub fn rank_schemes(entries: &[SweepEntry]) -> BTreeMap<Case, Vec<SchemeKind>> {
    let mut by_case: BTreeMap<Case, Vec<(f64, SchemeKind)>> = BTreeMap::new();
    for e in entries {
        if let Ok(r) = &e.outcome {
            let m = r.metrics.near_surface_median.unwrap_or(f64::INFINITY);
            by_case.entry(e.case).or_default().push((m, e.scheme));
        }
    }
    by_case
        .into_iter()
        .map(|(c, mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            (c, v.into_iter().map(|(_, s)| s).collect())
        })
        .collect()
}

/// Writes every successful report plus `summary.json` and `summary.txt`.
pub fn write_sweep(dir: &Path, entries: &[SweepEntry]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        if let Ok(r) = &e.outcome {
            write_report(dir, r)?;
        }
    }
    let reports = entries
        .iter()
        .map(|e| match &e.outcome {
            Ok(r) => SummaryEntry {
                case: e.case,
                scheme: e.scheme,
                status: "ok",
                error: None,
                metrics: Some(&r.metrics),
                metadata: Some(&r.metadata),
            },
            Err(err) => SummaryEntry {
                case: e.case,
                scheme: e.scheme,
                status: "failed",
                error: Some(err.to_string()),
                metrics: None,
                metadata: None,
            },
        })
        .collect();
    let ranking = rank_schemes(entries);
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        masking: "relative differences with a zero or non-finite reference are masked: empty in CSV, excluded from statistics",
        near_surface_metric: "median over low-resolution cells centered below near_surface_height of |speed_low - speed_high| / speed_high at the end of the run",
        reports,
        ranking,
    };
    let path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("summary.txt");
    fs::write(&path, summary_table(entries)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Plain-text table of the scalar metrics, one line per report.
pub fn summary_table(entries: &[SweepEntry]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
    let mut s = format!(
        "{:<9} {:<7} {:>11} {:>11} {:>11} {:>11}\n",
        "case", "scheme", "ustar_t0", "ustar_mean", "near_med", "near_max"
    );
    for e in entries {
        match &e.outcome {
            Ok(r) => {
                let m = &r.metrics;
                s += &format!(
                    "{:<9} {:<7} {:>11} {:>11} {:>11} {:>11}\n",
                    e.case.name(),
                    e.scheme.name(),
                    f(m.u_star_initial),
                    f(m.u_star_mean),
                    f(m.near_surface_median),
                    f(m.near_surface_max)
                );
            }
            Err(err) => s += &format!("{:<9} {:<7} failed: {err}\n", e.case.name(), e.scheme.name()),
        }
    }
    for (case, order) in rank_schemes(entries) {
        let names: Vec<&str> = order.iter().map(|s| s.name()).collect();
        s += &format!("ranking {case}: {}\n", names.join(" < "));
    }
    s
}

/// Twin finite-volume runs with the bottom viscosity set to its molecular value
/// and to the surface-layer value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K0Report {
    pub k_molecular: f64,
    /// Surface-layer viscosity at the first interface in the final state of the reference run.
    pub k_surface_layer: f64,
    /// `|u(z_1)|` at the end of each run.
    pub speed_z1_molecular: f64,
    pub speed_z1_surface_layer: f64,
    /// `speed_z1_molecular / speed_z1_surface_layer` at the end of the runs.
    pub inflation: f64,
    /// Largest ratio of `|u(z_1)|` between the runs at the same step.
    pub peak_inflation: f64,
    pub peak_time: f64,
    pub first_cell_speed_molecular: f64,
    pub first_cell_speed_surface_layer: f64,
    pub u_star_molecular: f64,
    pub u_star_surface_layer: f64,
    /// Ratio of the `u_*^2 e_tau h / (6 K)` spline term between the two viscosities.
    pub term_ratio: f64,
    /// `|term_ratio - k_surface_layer / k_molecular|`, relative.
    pub term_ratio_error: f64,
    /// The term for `2 K_mol` divided by the term for `K_mol`.
    pub doubling_ratio: f64,
}

pub fn k0_pathology_diagnostic(base: &SimulationConfig) -> Result<K0Report> {
    let mut reference = base.clone();
    reference.scheme = SchemeKind::Fv1;
    reference.delta_a = None;
    reference.bottom = BottomBoundary::Surface;
    reference.bottom_viscosity = BottomViscosity::SurfaceLayer;
    let mut pathological = reference.clone();
    pathological.bottom_viscosity = BottomViscosity::Molecular;

    let run = |c: SimulationConfig| -> Result<(Column, Vec<f64>, crate::dynamics::ColumnState)> {
        let col = Column::new(c)?;
        let mut s = col.initial_state()?;
        let mut speeds = vec![col.wind_at_first_interface(&s)?.norm()];
        for _ in 0..col.config().n_steps() {
            s = col.step(&s)?.0;
            speeds.push(col.wind_at_first_interface(&s)?.norm());
        }
        Ok((col, speeds, s))
    };
    let (a, b) = rayon::join(|| run(reference.clone()), || run(pathological));
    let ((_, speeds_ref, state_ref), (_, speeds_mol, state_mol)) = (a?, b?);
    let (peak_step, peak_inflation) = speeds_mol
        .iter()
        .zip(&speeds_ref)
        .map(|(m, r)| m / r)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, r)| if r > acc.1 { (k, r) } else { acc });

    let h = reference.grid.cell_sizes()[0];
    let z1 = reference.grid.interfaces()[1];
    let surface = state_ref.surface;
    let k_sl = mo_viscosity(z1, &surface, &reference.mo)?;
    let k_mol = reference.mo.molecular_viscosity;
    let t_mol = first_interface_k0_term(&surface, k_mol, h);
    let t_sl = first_interface_k0_term(&surface, k_sl, h);
    let t_double = first_interface_k0_term(&surface, 2.0 * k_mol, h);
    let term_ratio = t_mol.norm() / t_sl.norm();
    let exact = k_sl / k_mol;
    let speed_mol = *speeds_mol.last().unwrap();
    let speed_ref = *speeds_ref.last().unwrap();
    Ok(K0Report {
        k_molecular: k_mol,
        k_surface_layer: k_sl,
        speed_z1_molecular: speed_mol,
        speed_z1_surface_layer: speed_ref,
        inflation: speed_mol / speed_ref,
        peak_inflation,
        peak_time: peak_step as f64 * reference.dt,
        first_cell_speed_molecular: state_mol.u[0].norm(),
        first_cell_speed_surface_layer: state_ref.u[0].norm(),
        u_star_molecular: state_mol.surface.u_star,
        u_star_surface_layer: state_ref.surface.u_star,
        term_ratio,
        term_ratio_error: (term_ratio - exact).abs() / exact,
        doubling_ratio: t_double.norm() / t_mol.norm(),
    })
}

/// Error of the compact derivative reconstruction on one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompactErrorRow {
    pub cells: usize,
    pub h: f64,
    pub max_error: f64,
    /// Observed order against the previous row.
    pub order: Option<f64>,
}

/// Interface derivatives of `sin(z / scale)` from exact cell means on uniform
/// grids over `[0, height]`, with exact derivative rows at both ends.
pub fn compact_convergence(cells: &[usize], height: f64, scale: f64) -> Result<Vec<CompactErrorRow>> {
    let mut rows: Vec<CompactErrorRow> = Vec::with_capacity(cells.len());
    for &n in cells {
        let g = VerticalGrid::uniform(n, height)?;
        let z = g.interfaces();
        let means: Vec<f64> =
            z.windows(2).map(|w| scale * ((w[0] / scale).cos() - (w[1] / scale).cos()) / (w[1] - w[0])).collect();
        let d = |z: f64| (z / scale).cos() / scale;
        let phi = interface_derivatives(
            &g,
            &means,
            BoundaryRow::derivative(d(z[0])),
            BoundaryRow::derivative(d(*z.last().unwrap())),
        )?;
        let max_error = phi.iter().zip(z).map(|(p, z)| (p - d(*z)).abs()).fold(0.0, f64::max);
        let h = height / n as f64;
        let order = rows.last().map(|prev| (prev.max_error / max_error).ln() / (prev.h / h).ln());
        rows.push(CompactErrorRow { cells: n, h, max_error, order });
    }
    Ok(rows)
}

/// Constant-viscosity column with a no-slip ground over `depths` Ekman depths.
pub fn ekman_spiral_config(cells: usize, viscosity: f64, depths: f64, periods: f64) -> Result<SimulationConfig> {
    let mut c = SimulationConfig::neutral(SchemeKind::Fv1, VerticalGrid::uniform(2, 1.0)?);
    let depth = (2.0 * viscosity / c.coriolis).sqrt();
    c.grid = VerticalGrid::uniform(cells, depths * depth)?;
    c.viscosity = Viscosity::Constant(viscosity);
    c.bottom = BottomBoundary::NoSlip;
    c.top = TopBoundary::Geostrophic;
    c.stratification = Stratification::Neutral;
    c.duration = periods * 2.0 * std::f64::consts::PI / c.coriolis.abs();
    Ok(c)
}

/// Cell averages of `u_G (1 - exp(-(1 + i) z / D))`.
pub fn ekman_spiral_means(config: &SimulationConfig, viscosity: f64) -> Vec<Complex64> {
    let depth = (2.0 * viscosity / config.coriolis).sqrt();
    let a = Complex64::new(1.0, 1.0) / depth;
    config
        .grid
        .interfaces()
        .windows(2)
        .map(|w| {
            let integral = (w[1] - w[0]) - ((-a * w[0]).exp() - (-a * w[1]).exp()) / a;
            config.geostrophic_wind * integral / (w[1] - w[0])
        })
        .collect()
}

/// Relative L2 error of cell means against reference means, weighted by cell size.
pub fn relative_l2(grid: &VerticalGrid, got: &[Complex64], reference: &[Complex64]) -> f64 {
    let h = grid.cell_sizes();
    let num: f64 = got.iter().zip(reference).zip(h).map(|((g, r), h)| h * (g - r).norm_sqr()).sum();
    let den: f64 = reference.iter().zip(h).map(|(r, h)| h * r.norm_sqr()).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EkmanErrorRow {
    pub cells: usize,
    pub relative_l2: f64,
}

/// Ekman-spiral error for each resolution.
pub fn ekman_convergence(cells: &[usize], viscosity: f64, depths: f64, periods: f64) -> Result<Vec<EkmanErrorRow>> {
    cells
        .par_iter()
        .map(|&n| {
            let c = ekman_spiral_config(n, viscosity, depths, periods)?;
            let run = integrate(&c, Sampling::default())?;
            let exact = ekman_spiral_means(&c, viscosity);
            Ok(EkmanErrorRow { cells: n, relative_l2: relative_l2(&c.grid, &run.final_snapshot().wind, &exact) })
        })
        .collect()
}
