use ekman_column::closure::{initial_tke, step_tke, TkeBottom, TkeConstants, TkeMesh, TkeState, TkeStepOptions};
use ekman_column::config::RunConfig;
use ekman_column::dynamics::{integrate_column, Column, Sampling};
use ekman_column::harness::Case;
use proptest::prelude::*;

fn mesh(z: &[f64]) -> TkeMesh<'_> {
    TkeMesh { interfaces: z, roughness: 0.1, kappa: 0.4 }
}

fn column_heights(n: usize) -> Vec<f64> {
    let mut z = vec![5.0];
    for k in 0..n {
        z.push(z.last().unwrap() + 10.0 + 2.0 * k as f64);
    }
    z
}

#[test]
fn frozen_coefficient_energy_balance() {
    let z = column_heights(20);
    let m = mesh(&z);
    let c = TkeConstants::default();
    let mut st = initial_tke(&m, 0.05, &c);
    st.e.iter_mut().enumerate().for_each(|(j, e)| *e = 0.05 + 0.01 * (j as f64 * 0.7).sin());
    let shear2: Vec<f64> = (0..=20).map(|m| 1e-4 / (1.0 + m as f64)).collect();
    let n2: Vec<f64> = (0..=20).map(|m| 2e-5 * (m as f64 * 0.3).cos()).collect();
    let dt = 60.0;
    let next = step_tke(&st, &shear2, &n2, dt, &m, TkeBottom::ZeroFlux, &c, TkeStepOptions { clip: false }).unwrap();
    let h: Vec<f64> = z.windows(2).map(|w| w[1] - w[0]).collect();
    let total = |e: &[f64]| e.iter().zip(&h).map(|(e, h)| e * h).sum::<f64>();
    let mut source = 0.0;
    for j in 0..20 {
        let prod = 0.5 * (st.k_u[j] * shear2[j] + st.k_u[j + 1] * shear2[j + 1]);
        let buoy = 0.5 * (st.k_theta[j] * n2[j] + st.k_theta[j + 1] * n2[j + 1]);
        let diss = c.c_eps * st.e[j].sqrt() * next.e[j] / st.l_eps[j];
        source += dt * h[j] * (prod - buoy - diss);
    }
    let change = total(&next.e) - total(&st.e);
    assert!((change - source).abs() <= 1e-10 * total(&st.e), "{change} vs {source}");
}

#[test]
fn production_dissipation_equilibrium() {
    let z = [0.0, 50.0, 100.0];
    let m = mesh(&z);
    let c = TkeConstants::default();
    let s2 = 1e-3;
    let mut st = initial_tke(&m, 0.01, &c);
    let frozen: TkeState = st.clone();
    // Uniform e with matching lengths has no transport; freeze K and iterate.
    let uniform_len = frozen.l_m[0];
    st.l_m = vec![uniform_len; 2];
    st.l_eps = vec![uniform_len; 2];
    let k = c.c_k * uniform_len * 0.1;
    let mut e = 0.01;
    for _ in 0..2000 {
        st.e = vec![e; 2];
        st.k_u = vec![k; 3];
        st.k_theta = vec![k; 3];
        let next =
            step_tke(&st, &[s2; 3], &[0.0; 3], 60.0, &m, TkeBottom::ZeroFlux, &c, TkeStepOptions::default()).unwrap();
        e = next.e[0];
    }
    // With frozen K the balance is K S^2 = c_eps e^{3/2} / l.
    let expected = (k * s2 * uniform_len / c.c_eps).powf(2.0 / 3.0);
    assert!((e - expected).abs() / expected < 1e-4, "{e} vs {expected}");
    // With K = c_k l sqrt(e) it reduces to e = (c_k / c_eps) l^2 S^2.
    let closed = c.c_k / c.c_eps * uniform_len * uniform_len * s2;
    let mut e2 = 0.01;
    for _ in 0..4000 {
        st.e = vec![e2; 2];
        st.k_u = vec![c.c_k * uniform_len * e2.sqrt(); 3];
        st.k_theta = st.k_u.clone();
        let next =
            step_tke(&st, &[s2; 3], &[0.0; 3], 60.0, &m, TkeBottom::ZeroFlux, &c, TkeStepOptions::default()).unwrap();
        e2 = next.e[0];
    }
    assert!((e2 - closed).abs() / closed < 1e-4, "{e2} vs {closed}");
}

#[test]
fn strong_stratification_decays_to_floor() {
    let z = column_heights(6);
    let m = mesh(&z);
    let c = TkeConstants::default();
    let mut st = initial_tke(&m, 0.1, &c);
    for _ in 0..500 {
        st = step_tke(&st, &[1e-8; 7], &[1e-2; 7], 60.0, &m, TkeBottom::ZeroFlux, &c, TkeStepOptions::default())
            .unwrap();
    }
    assert!(st.e.iter().all(|&e| e == c.e_min));
}

#[test]
fn negative_time_step_rejected() {
    let z = column_heights(3);
    let m = mesh(&z);
    let c = TkeConstants::default();
    let st = initial_tke(&m, 0.1, &c);
    assert!(step_tke(&st, &[0.0; 4], &[0.0; 4], -1.0, &m, TkeBottom::ZeroFlux, &c, TkeStepOptions::default()).is_err());
}

#[test]
fn unstable_viscosity_peaks_inside_mixed_layer() {
    let mut cfg = RunConfig::shipped(Case::Unstable).simulation().unwrap();
    cfg.duration = 12.0 * 3600.0;
    let col = Column::new(cfg).unwrap();
    let run = integrate_column(&col, Sampling::default()).unwrap();
    let k = &run.final_state.tke.k_u;
    assert!(k.iter().all(|&v| v > 0.0));
    let (imax, _) = k.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    assert!(imax > 1 && imax < k.len() - 2, "maximum at interface {imax} of {}", k.len());
}

proptest! {
    #[test]
    fn tke_and_viscosity_stay_admissible(
        e0 in prop::collection::vec(1e-6f64..1.0, 8),
        shear2 in prop::collection::vec(0.0f64..1e-2, 9),
        n2 in prop::collection::vec(-1e-3f64..1e-3, 9),
        dt in 1.0f64..600.0,
        e_s in 1e-6f64..2.0,
    ) {
        let z = column_heights(8);
        let m = mesh(&z);
        let c = TkeConstants::default();
        let mut st = initial_tke(&m, 0.01, &c);
        st.e = e0;
        for _ in 0..3 {
            st = step_tke(&st, &shear2, &n2, dt, &m, TkeBottom::Value(e_s), &c, TkeStepOptions::default()).unwrap();
            prop_assert!(st.e.iter().all(|&e| e >= c.e_min && e.is_finite()));
            prop_assert!(st.k_u.iter().chain(&st.k_theta).all(|&k| k >= 0.0 && k.is_finite()));
        }
    }
}
