use std::f64::consts::PI;

use ekman_column::dynamics::{Layout, SimulationConfig};
use ekman_column::grid::VerticalGrid;
use ekman_column::surface::{
    boundary_row, bulk, mo_profile_theta, mo_profile_u, mo_viscosity, sl_wind_integral, EvalPoint, MoParameters,
    SchemeKind, SurfaceState,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn params() -> MoParameters {
    MoParameters::default()
}

fn state_at(u_star: f64, zeta: f64, delta: f64, p: &MoParameters) -> SurfaceState {
    let mut s = SurfaceState::neutral(u_star, Complex64::from_polar(1.0, 0.3), delta);
    if zeta != 0.0 {
        let l = delta / zeta;
        s.obukhov_length = l;
        s.theta_star = u_star * u_star * p.theta_ref / (p.kappa * p.gravity * l);
    }
    s
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1)
}

fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    simpson(&f, a, b, fa, fm, fb, tol, 40)
}

#[test]
fn neutral_log_law_inversion() {
    let p = params();
    let speed = 0.3 / 0.4 * (1.0f64 + 10.0 / 0.1).ln();
    let prev = SurfaceState::neutral(0.1, Complex64::new(1.0, 0.0), 10.0);
    let r = bulk(Complex64::new(0.0, speed), 0.0, 10.0, &p, &prev);
    assert!((r.state.u_star - 0.3).abs() < 1e-8);
    assert!((r.state.e_tau - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    assert!(r.state.obukhov_length.is_infinite());
}

#[test]
fn calm_wind_keeps_direction() {
    let p = params();
    let prev = SurfaceState::neutral(0.2, Complex64::from_polar(1.0, 1.0), 5.0);
    let r = bulk(Complex64::new(0.0, 0.0), 1.0, 5.0, &p, &prev);
    assert_eq!(r.state.u_star, p.u_star_floor);
    assert_eq!(r.state.e_tau, prev.e_tau);
}

/// Fixed point of the stability iteration by bisection on `1/L`.
fn bisect_stable(speed: f64, dtheta: f64, z: f64, p: &MoParameters) -> f64 {
    let b = p.kappa * p.gravity / p.theta_ref;
    let g = |inv_l: f64| {
        let u = p.kappa * speed / p.momentum_factor(z, inv_l);
        let t = p.kappa * dtheta / p.heat_factor(z, inv_l);
        b * t / (u * u) - inv_l
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    p.kappa * speed / p.momentum_factor(z, 0.5 * (lo + hi))
}

#[test]
fn stable_stratification_reduces_friction_velocity() {
    let p = params();
    let prev = SurfaceState::neutral(0.1, Complex64::new(1.0, 0.0), 10.0);
    let u = Complex64::new(5.0, 0.0);
    let neutral = bulk(u, 0.0, 10.0, &p, &prev).state;
    let stable = bulk(u, 1.0, 10.0, &p, &prev);
    assert!(stable.state.obukhov_length > 0.0);
    assert!(stable.state.u_star < neutral.u_star);
    let oracle = bisect_stable(5.0, 1.0, 10.0, &p);
    assert!((stable.state.u_star - oracle).abs() / oracle < 1e-5, "{} vs {oracle}", stable.state.u_star);
}

#[test]
fn profile_matches_quadrature_of_stress_over_viscosity() {
    let p = params();
    for zeta in [0.0, 0.3, -0.4] {
        let s = state_at(0.3, zeta, 10.0, &p);
        for z in [0.5, 2.0, 10.0] {
            let k = |x: f64| mo_viscosity(x, &s, &p).unwrap();
            // Integrate in s = ln(1 + z/z_r) where the integrand is smooth.
            let zr = p.roughness;
            let integrand = |t: f64| {
                let x = zr * t.exp_m1();
                s.u_star * s.u_star / k(x) * zr * t.exp()
            };
            let q = adaptive(integrand, 0.0, (z / zr).ln_1p(), 1e-14);
            let got = mo_profile_u(z, &s, &p).unwrap();
            let rel = (got - s.e_tau * q).norm() / got.norm();
            assert!(rel < 1e-10, "zeta {zeta}, z {z}: {rel:e}");
        }
    }
}

#[test]
fn viscosity_times_shear_is_stress() {
    let p = params();
    for zeta in [0.0, 0.5, -0.5] {
        let s = state_at(0.4, zeta, 20.0, &p);
        for z in [1.0, 5.0, 12.0, 19.0] {
            let h = 1e-3;
            let u = |x: f64| mo_profile_u(x, &s, &p).unwrap();
            let du = (u(z - 2.0 * h) - u(z + 2.0 * h) + (u(z + h) - u(z - h)) * 8.0) / (12.0 * h);
            let tau = du * mo_viscosity(z, &s, &p).unwrap();
            assert!((tau - s.stress()).norm() / s.stress().norm() < 1e-10, "zeta {zeta}, z {z}");
        }
    }
}

#[test]
fn viscosity_examples() {
    let p = params();
    let s = SurfaceState::neutral(0.3, Complex64::new(1.0, 0.0), 20.0);
    assert!((mo_viscosity(10.0, &s, &p).unwrap() - 1.212).abs() < 1e-12);
    assert!((mo_viscosity(0.0, &s, &p).unwrap() - 0.4 * 0.3 * 0.1).abs() < 1e-15);
    assert!(mo_viscosity(20.5, &s, &p).is_err());
    assert_eq!(mo_profile_u(0.0, &s, &p).unwrap(), Complex64::new(0.0, 0.0));
    assert_eq!(mo_profile_theta(0.0, 280.0, &s, &p).unwrap(), 280.0);
}

#[test]
fn stability_function_values() {
    let p = params();
    assert_eq!(p.phi_m(0.0), 1.0);
    assert_eq!(p.psi_m(0.0), 0.0);
    assert!(p.psi_h(0.0).abs() < 1e-15);
    assert!((p.phi_m(-1.0) - 17f64.powf(-0.25)).abs() < 1e-15);
    assert!((p.phi_h(-1.0) - 17f64.powf(-0.5)).abs() < 1e-15);
    assert_eq!(p.phi_m(0.2), 2.0);
    assert_eq!(p.psi_m(0.2), -1.0);
    // psi(zeta) = int_0^zeta (1 - phi(x)) / x dx
    for zeta in [-2.0, -0.5, -0.05] {
        let q = adaptive(|x: f64| if x == 0.0 { 4.0 } else { (1.0 - p.phi_m(x)) / x }, zeta, 0.0, 1e-13);
        assert!((p.psi_m(zeta) + q).abs() < 1e-9, "psi_m({zeta})");
        let q = adaptive(|x: f64| if x == 0.0 { 8.0 } else { (1.0 - p.phi_h(x)) / x }, zeta, 0.0, 1e-13);
        assert!((p.psi_h(zeta) + q).abs() < 1e-9, "psi_h({zeta})");
    }
}

#[test]
fn cell_average_underestimates_surface_flux() {
    let p = params();
    let z1 = 10.0;
    let truth = SurfaceState::neutral(0.3, Complex64::new(1.0, 0.0), z1);
    let mean = sl_wind_integral(0.0, z1, &truth, &p) / z1;
    let prev = SurfaceState::neutral(0.1, Complex64::new(1.0, 0.0), 0.5 * z1);
    let fv1 = bulk(mean, 0.0, 0.5 * z1, &p, &prev).state.u_star;
    assert!(fv1 < truth.u_star, "{fv1} vs {}", truth.u_star);
}

#[test]
fn fv2_row_is_the_free_row_at_the_first_interface() {
    let grid = VerticalGrid::ifs_l137_lowest_25();
    let z1 = grid.interfaces()[1];
    let fv2 = Layout::new(&SimulationConfig::neutral(SchemeKind::Fv2, grid.clone())).unwrap();
    assert_eq!(fv2.eval, EvalPoint::SplineLowerEdge { z: z1 });
    assert_eq!(fv2.delta_a, z1);
    assert_eq!(&fv2.interfaces[..], &grid.interfaces()[1..]);

    let mut free_cfg = SimulationConfig::neutral(SchemeKind::FvFree, grid.clone());
    free_cfg.delta_a = Some(z1);
    let free = Layout::new(&free_cfg).unwrap();
    assert_eq!(free.eval, fv2.eval);
    assert_eq!(free.interfaces, fv2.interfaces);

    let s = SurfaceState::neutral(0.35, Complex64::from_polar(1.0, 0.2), z1);
    let h = grid.interfaces()[2] - z1;
    let u = Complex64::new(6.0, 1.0);
    assert_eq!(boundary_row(fv2.eval, &s, 1.3, h, u), boundary_row(free.eval, &s, 1.3, h, u));
}

#[test]
fn rest_state_flux_points_along_the_wind() {
    let p = params();
    let prev = SurfaceState::neutral(0.1, Complex64::new(0.0, 1.0), 10.0);
    let s = bulk(Complex64::new(8.0, 0.0), 0.0, 10.0, &p, &prev).state;
    let row = boundary_row(EvalPoint::FirstCellValue { z: 10.0 }, &s, 1.0, 20.0, Complex64::new(8.0, 0.0));
    // K phi = u_*^2 u / |u| at the rest state.
    let flux = -row.mean * Complex64::new(8.0, 0.0);
    assert!((flux - Complex64::new(s.u_star * s.u_star, 0.0)).norm() < 1e-15);
}

proptest! {
    #[test]
    fn bulk_left_inverts_profile(u_star in 0.05f64..1.0, zeta in -0.5f64..0.5, delta in 1.0f64..30.0) {
        let p = params();
        let s = state_at(u_star, zeta, delta, &p);
        let u = mo_profile_u(delta, &s, &p).unwrap();
        let dtheta = mo_profile_theta(delta, 280.0, &s, &p).unwrap() - 280.0;
        let prev = SurfaceState::neutral(0.1, Complex64::new(1.0, 0.0), delta);
        let r = bulk(u, dtheta, delta, &p, &prev);
        prop_assert!((r.state.u_star - u_star).abs() / u_star <= 1e-6, "{} vs {u_star}", r.state.u_star);
    }

    #[test]
    fn flux_direction_has_unit_modulus(re in -30.0f64..30.0, im in -30.0f64..30.0, dtheta in -5.0f64..5.0) {
        prop_assume!(re != 0.0 || im != 0.0);
        let p = params();
        let prev = SurfaceState::neutral(0.1, Complex64::new(1.0, 0.0), 10.0);
        let r = bulk(Complex64::new(re, im), dtheta, 10.0, &p, &prev);
        prop_assert!((r.state.e_tau.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(r.state.u_star >= p.u_star_floor);
    }

    #[test]
    fn rotating_direction_rotates_profile(alpha in 0.0f64..(2.0 * PI), z in 0.0f64..10.0) {
        let p = params();
        let s = SurfaceState::neutral(0.3, Complex64::new(1.0, 0.0), 10.0);
        let mut r = s;
        r.e_tau = Complex64::from_polar(1.0, alpha);
        let a = mo_profile_u(z, &s, &p).unwrap() * Complex64::from_polar(1.0, alpha);
        let b = mo_profile_u(z, &r, &p).unwrap();
        prop_assert!((a - b).norm() <= 1e-13 * a.norm().max(1e-300));
    }
}
