//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use crate::config::RunConfig;
use crate::dynamics::{integrate, Sampling};
use crate::error::{Error, Result};
use crate::harness::{
    check_shared_physics, compact_convergence, ekman_convergence, k0_pathology_diagnostic, open_csv, run_all,
    summary_table, write_sweep, Case, SCHEMA_VERSION,
};
use crate::surface::SchemeKind;

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "EKMAN_LOG";

#[derive(Debug, Parser)]
#[command(name = "ekman-column", version, about = "Single-column Ekman layer with surface-layer coupling schemes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write its friction velocity and final profiles.
    Simulate(RunArgs),
    /// Run low/high-resolution consistency experiments.
    Experiment(ExperimentArgs),
    /// Compare molecular and surface-layer bottom viscosity in the finite-volume scheme.
    DiagnoseK0(RunArgs),
    /// Convergence of the spline derivatives and of the Ekman spiral.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Time step in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration; the shipped neutral case when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shipped case to use when no configuration is given.
    #[arg(long)]
    pub case: Option<Case>,
    /// Scheme overriding the configuration.
    #[arg(long)]
    pub scheme: Option<SchemeKind>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML configuration of one case.
    #[arg(long, conflicts_with = "case")]
    pub config: Option<PathBuf>,
    /// Shipped cases, comma separated; all three when neither this nor a configuration is given.
    #[arg(long, value_delimiter = ',')]
    pub case: Vec<Case>,
    /// Schemes, comma separated; those of the configuration when absent.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Vec<SchemeKind>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Cell counts of the uniform grids.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    pub cells: Vec<usize>,
}

fn load(config: Option<&Path>, case: Option<Case>, overrides: &Overrides) -> Result<RunConfig> {
    let mut cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::shipped(case.unwrap_or(Case::Neutral)),
    };
    if let Some(dt) = overrides.dt {
        cfg.file.time.dt = dt;
    }
    if let Some(d) = overrides.duration {
        cfg.file.time.duration = d;
    }
    cfg.simulation()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn simulate(args: &RunArgs) -> Result<()> {
    let mut cfg = load(args.config.as_deref(), args.case, &args.overrides)?;
    if let Some(s) = args.scheme {
        cfg.file.scheme.kind = s;
    }
    let sim = cfg.simulation()?;
    let case = cfg.file.case;
    info!("simulating {case} with {} for {} s", sim.scheme, sim.duration);
    let run = integrate(&sim, Sampling::default())?;
    create_dir(&args.out)?;
    let scheme = sim.scheme.name();
    let stem = |kind: &str| args.out.join(format!("{case}_{scheme}_{kind}.csv"));

    let mut w = open_csv(&stem("ustar"))?;
    w.write_record(["time_s", "scheme", "resolution", "value"])?;
    for (t, u) in run.times.iter().zip(&run.u_star) {
        w.write_record([t.to_string(), scheme.into(), "low".into(), u.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(stem("ustar"), e))?;

    let snap = run.final_snapshot();
    let mut w = open_csv(&stem("profile"))?;
    w.write_record(["z_m", "scheme", "resolution", "value"])?;
    for (z, u) in sim.grid.centers().iter().zip(&snap.wind) {
        w.write_record([z.to_string(), scheme.into(), "low".into(), u.norm().to_string()])?;
    }
    w.flush().map_err(|e| Error::io(stem("profile"), e))?;

    if let Some(theta) = &snap.theta {
        let mut w = open_csv(&stem("theta"))?;
        w.write_record(["z_m", "scheme", "resolution", "value"])?;
        for (z, t) in sim.grid.centers().iter().zip(theta) {
            w.write_record([z.to_string(), scheme.into(), "low".into(), t.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(stem("theta"), e))?;
    }

    #[derive(Serialize)]
    struct SimulateSummary {
        schema_version: u32,
        case: Case,
        scheme: SchemeKind,
        steps: usize,
        final_u_star: f64,
        max_budget_residual: f64,
        max_continuity: f64,
        unconverged_bulk_steps: usize,
    }
    let summary = SimulateSummary {
        schema_version: SCHEMA_VERSION,
        case,
        scheme: sim.scheme,
        steps: run.final_state.step,
        final_u_star: run.final_state.surface.u_star,
        max_budget_residual: run.max_budget_residual,
        max_continuity: run.max_continuity,
        unconverged_bulk_steps: run.unconverged_bulk_steps,
    };
    write_json(&args.out.join(format!("{case}_{scheme}_summary.json")), &summary)?;
    println!("{case} {scheme}: {} steps, final u_* = {:.4} m/s", summary.steps, summary.final_u_star);
    Ok(())
}

fn experiment(args: &ExperimentArgs) -> Result<()> {
    let configs: Vec<RunConfig> = match &args.config {
        Some(p) => vec![load(Some(p), None, &args.overrides)?],
        None => {
            let cases = if args.case.is_empty() { Case::ALL.to_vec() } else { args.case.clone() };
            cases.into_iter().map(|c| load(None, Some(c), &args.overrides)).collect::<Result<_>>()?
        }
    };
    let mut entries = Vec::new();
    for cfg in &configs {
        let schemes: Vec<SchemeKind> =
            if args.schemes.is_empty() { cfg.schemes().to_vec() } else { args.schemes.clone() };
        info!("experiment {} with {} schemes", cfg.file.case, schemes.len());
        entries.extend(run_all(&[cfg.experiment()?], &schemes));
    }
    check_shared_physics(&entries)?;
    write_sweep(&args.out, &entries)?;
    print!("{}", summary_table(&entries));
    let failed: Vec<String> = entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().err().map(|err| format!("{} {}: {err}", e.case, e.scheme)))
        .collect();
    for f in &failed {
        warn!("{f}");
    }
    match failed.len() {
        0 => Ok(()),
        n => Err(Error::Failed(format!("{n} of {} reports failed", entries.len()))),
    }
}

fn diagnose_k0(args: &RunArgs) -> Result<()> {
    let cfg = load(args.config.as_deref(), args.case, &args.overrides)?;
    let sim = cfg.simulation()?;
    let report = k0_pathology_diagnostic(&sim)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("k0_diagnostic.json"), &report)?;
    println!(
        "|u(z_1)|: molecular {:.4} m/s, surface layer {:.4} m/s, ratio {:.3} at end, {:.3e} peak at t = {} s",
        report.speed_z1_molecular,
        report.speed_z1_surface_layer,
        report.inflation,
        report.peak_inflation,
        report.peak_time
    );
    println!(
        "spline term ratio {:.6e} (K_sl / K_mol = {:.6e}), doubling K_mol scales it by {}",
        report.term_ratio,
        report.k_surface_layer / report.k_molecular,
        report.doubling_ratio
    );
    Ok(())
}

fn convergence(args: &ConvergenceArgs) -> Result<()> {
    create_dir(&args.out)?;
    let rows = compact_convergence(&args.cells, 400.0, 50.0)?;
    let path = args.out.join("compact_convergence.csv");
    let mut w = open_csv(&path)?;
    w.write_record(["cells", "h_m", "max_error", "order"])?;
    for r in &rows {
        w.write_record([
            r.cells.to_string(),
            r.h.to_string(),
            r.max_error.to_string(),
            r.order.map(|o| o.to_string()).unwrap_or_default(),
        ])?;
        println!(
            "compact  n = {:4}  max|phi - u'| = {:.3e}  order {}",
            r.cells,
            r.max_error,
            r.order.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let rows = ekman_convergence(&args.cells, 1.0, 10.0, 5.0)?;
    let path = args.out.join("ekman_convergence.csv");
    let mut w = open_csv(&path)?;
    w.write_record(["cells", "relative_l2"])?;
    for r in &rows {
        w.write_record([r.cells.to_string(), r.relative_l2.to_string()])?;
        println!("ekman    n = {:4}  relative L2 = {:.3e}", r.cells, r.relative_l2);
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Experiment(a) => experiment(a),
        Command::DiagnoseK0(a) => diagnose_k0(a),
        Command::Convergence(a) => convergence(a),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let cat = e.category();
            eprintln!("error ({}): {e}", cat.name());
            cat.exit_code()
        }
    }
}
