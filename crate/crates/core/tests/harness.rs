use std::fs;

use ekman_column::config::RunConfig;
use ekman_column::grid::VerticalGrid;
use ekman_column::harness::{
    check_shared_physics, physics_hash, project_to_coarse, rank_schemes, run_all, write_sweep, Case, ExperimentConfig,
};
use ekman_column::surface::SchemeKind;
use proptest::prelude::*;

fn short(case: Case, hours: f64) -> ExperimentConfig {
    let mut cfg = RunConfig::shipped(case);
    cfg.file.time.duration = hours * 3600.0;
    cfg.experiment().unwrap()
}

#[test]
fn sweep_produces_every_report_and_identical_bytes() {
    let exps: Vec<_> = Case::ALL.iter().map(|&c| short(c, 1.0)).collect();
    let entries = run_all(&exps, &SchemeKind::ALL);
    assert_eq!(entries.len(), 12);
    assert!(entries.iter().all(|e| e.outcome.is_ok()));
    check_shared_physics(&entries).unwrap();

    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_sweep(a.path(), &entries).unwrap();
    write_sweep(b.path(), &run_all(&exps, &SchemeKind::ALL)).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    // 4 series per scheme for neutral, 5 for the stratified cases, plus the summaries.
    assert_eq!(names.len(), 4 * 4 + 2 * 4 * 5 + 2);
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n:?}");
    }

    let ustar = fs::read_to_string(a.path().join("neutral_fvfree_ustar.csv")).unwrap();
    assert_eq!(ustar.lines().next().unwrap(), "time_s,scheme,resolution,value");
    assert_eq!(ustar.lines().count(), 1 + 2 * 121);
    let theta = fs::read_to_string(a.path().join("stable_fv1_theta.csv")).unwrap();
    assert_eq!(theta.lines().next().unwrap(), "z_m,scheme,resolution,value");

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["reports"].as_array().unwrap().len(), 12);
    assert_eq!(summary["ranking"]["neutral"].as_array().unwrap().len(), 4);
}

#[test]
fn ranking_orders_by_near_surface_median() {
    let entries = run_all(&[short(Case::Unstable, 2.0)], &SchemeKind::ALL);
    let ranking = rank_schemes(&entries);
    let order = &ranking[&Case::Unstable];
    let metric = |s: SchemeKind| {
        entries.iter().find(|e| e.scheme == s).unwrap().outcome.as_ref().unwrap().metrics.near_surface_median.unwrap()
    };
    for w in order.windows(2) {
        assert!(metric(w[0]) <= metric(w[1]));
    }
}

#[test]
fn paired_runs_share_physics_except_resolution() {
    let exp = short(Case::Neutral, 1.0);
    let (lo, hi) = exp.paired_configs(SchemeKind::FvFree).unwrap();
    assert_eq!(hi.grid.n_cells(), 3 * lo.grid.n_cells());
    assert_eq!(lo.surface_layer_height(), hi.surface_layer_height());
    let (_, hi_fd) = exp.paired_configs(SchemeKind::Fd).unwrap();
    assert_eq!(physics_hash(&hi), physics_hash(&hi_fd));
    let mut other = hi.clone();
    other.dt = 60.0;
    assert_ne!(physics_hash(&hi), physics_hash(&other));
}

fn gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.5384693101056831, 0.5384693101056831, -0.906179845938664, 0.906179845938664];
    const W: [f64; 5] =
        [0.5688888888888889, 0.47862867049936647, 0.47862867049936647, 0.23692688505618908, 0.23692688505618908];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    X.iter().zip(W).map(|(x, w)| w * f(m + r * x)).sum::<f64>() * r
}

proptest! {
    #[test]
    fn projection_matches_quadrature(sizes in prop::collection::vec(1.0f64..50.0, 2..15), k in 2usize..5,
                                     a in -3.0f64..3.0, b in -0.1f64..0.1, c in -1e-3f64..1e-3) {
        let mut z = vec![0.0];
        for h in sizes {
            z.push(z.last().unwrap() + h);
        }
        let coarse = VerticalGrid::from_interfaces(z).unwrap();
        let fine = coarse.refine(k).unwrap();
        let f = move |x: f64| a + b * x + c * x * x * x;
        let means: Vec<f64> = fine.interfaces().windows(2).map(|w| gauss(&f, w[0], w[1]) / (w[1] - w[0])).collect();
        let projected = project_to_coarse(&fine, &coarse, &means).unwrap();
        for (p, w) in projected.iter().zip(coarse.interfaces().windows(2)) {
            let exact = gauss(&f, w[0], w[1]) / (w[1] - w[0]);
            prop_assert!((p - exact).abs() <= 1e-10 * exact.abs().max(1.0));
        }
    }
}
