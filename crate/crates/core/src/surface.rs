//! Monin-Obukhov surface layer: stability functions, bulk inversion,
//! analytical profiles and the boundary rows of the four coupling schemes.
//!
//! Profiles are written with the roughness-shifted stability argument
//! `(z + z_r)/L`, so that
//!
//! ```text
//! u(z) = u_*/kappa [ ln(1 + z/z_r) - psi_m((z + z_r)/L) + psi_m(z_r/L) ] e_tau
//! ```
//!
//! is exactly `int_0^z u_*^2 e_tau / K_u(z') dz'` with
//! `K_u(z) = kappa u_* (z + z_r) / phi_m((z + z_r)/L)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VerticalGrid;
use crate::spline::BoundaryRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityFamily {
    /// Businger-Dyer gradients with Paulson integrals on the unstable side.
    #[default]
    BusingerDyer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoParameters {
    pub kappa: f64,
    /// Roughness length z_r, m.
    pub roughness: f64,
    /// Molecular viscosity, m^2/s.
    pub molecular_viscosity: f64,
    pub gravity: f64,
    /// Reference potential temperature for buoyancy, K.
    pub theta_ref: f64,
    pub u_star_floor: f64,
    pub stability: StabilityFamily,
}

impl Default for MoParameters {
    fn default() -> Self {
        MoParameters {
            kappa: 0.4,
            roughness: 0.1,
            molecular_viscosity: 1e-5,
            gravity: 9.81,
            theta_ref: 283.0,
            u_star_floor: 1e-4,
            stability: StabilityFamily::BusingerDyer,
        }
    }
}

impl MoParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.3 && self.kappa < 0.5) {
            return Err(Error::Parameter(format!("kappa must lie in (0.3, 0.5), got {}", self.kappa)));
        }
        for (name, v) in [
            ("roughness", self.roughness),
            ("molecular_viscosity", self.molecular_viscosity),
            ("gravity", self.gravity),
            ("theta_ref", self.theta_ref),
            ("u_star_floor", self.u_star_floor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn phi_m(&self, zeta: f64) -> f64 {
        let StabilityFamily::BusingerDyer = self.stability;
        if zeta >= 0.0 {
            1.0 + 5.0 * zeta
        } else {
            (1.0 - 16.0 * zeta).powf(-0.25)
        }
    }

    pub fn phi_h(&self, zeta: f64) -> f64 {
        if zeta >= 0.0 {
            1.0 + 5.0 * zeta
        } else {
            (1.0 - 16.0 * zeta).powf(-0.5)
        }
    }

    /// Integrated momentum stability correction, `psi_m' = (1 - phi_m)/zeta`.
    pub fn psi_m(&self, zeta: f64) -> f64 {
        if zeta >= 0.0 {
            -5.0 * zeta
        } else {
            let x = (1.0 - 16.0 * zeta).powf(0.25);
            2.0 * ((1.0 + x) / 2.0).ln() + ((1.0 + x * x) / 2.0).ln() - 2.0 * x.atan() + PI / 2.0
        }
    }

    pub fn psi_h(&self, zeta: f64) -> f64 {
        if zeta >= 0.0 {
            -5.0 * zeta
        } else {
            let x = (1.0 - 16.0 * zeta).powf(0.25);
            2.0 * ((1.0 + x * x) / 2.0).ln()
        }
    }

    /// Dimensionless momentum profile `kappa |u(z)| / u_*` for inverse Obukhov length `inv_l`.
    pub fn momentum_factor(&self, z: f64, inv_l: f64) -> f64 {
        let zr = self.roughness;
        (1.0 + z / zr).ln() - self.psi_m((z + zr) * inv_l) + self.psi_m(zr * inv_l)
    }

    /// Dimensionless heat profile `kappa (theta(z) - theta_s) / theta_*`.
    pub fn heat_factor(&self, z: f64, inv_l: f64) -> f64 {
        let zr = self.roughness;
        (1.0 + z / zr).ln() - self.psi_h((z + zr) * inv_l) + self.psi_h(zr * inv_l)
    }
}

/// Friction scales and flux direction of the surface layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceState {
    pub u_star: f64,
    pub theta_star: f64,
    /// Unit complex direction of the surface stress.
    pub e_tau: Complex64,
    pub delta_a: f64,
    /// Obukhov length, m; infinite in neutral conditions.
    pub obukhov_length: f64,
}

impl SurfaceState {
    pub fn neutral(u_star: f64, e_tau: Complex64, delta_a: f64) -> Self {
        SurfaceState { u_star, theta_star: 0.0, e_tau, delta_a, obukhov_length: f64::INFINITY }
    }

    /// `1/L`, zero in the neutral case.
    pub fn inverse_obukhov(&self) -> f64 {
        if self.obukhov_length.is_finite() {
            1.0 / self.obukhov_length
        } else {
            0.0
        }
    }

    /// Surface stress `u_*^2 e_tau`.
    pub fn stress(&self) -> Complex64 {
        self.e_tau * (self.u_star * self.u_star)
    }
}

/// Result of [`bulk`]: the surface state and whether the fixed point converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkResult {
    pub state: SurfaceState,
    pub converged: bool,
    pub iterations: usize,
}

const BULK_MAX_ITER: usize = 20;
const BULK_TOL: f64 = 1e-6;

/// Inverts the Monin-Obukhov profiles for `(u_*, theta_*, L)` from the wind
/// `u_at_eval` and the air-surface temperature difference `delta_theta`
/// sampled at height `z_eval`.
///
/// Picard iteration on the inverse Obukhov length; successive updates are
/// averaged once the friction velocity starts to oscillate.
pub fn bulk(
    u_at_eval: Complex64,
    delta_theta: f64,
    z_eval: f64,
    params: &MoParameters,
    prev: &SurfaceState,
) -> BulkResult {
    let speed = u_at_eval.norm();
    let floor = params.u_star_floor;
    if speed == 0.0 || !speed.is_finite() {
        let state = SurfaceState {
            u_star: floor,
            theta_star: 0.0,
            e_tau: prev.e_tau,
            delta_a: prev.delta_a,
            obukhov_length: f64::INFINITY,
        };
        return BulkResult { state, converged: true, iterations: 0 };
    }
    let e_tau = u_at_eval / speed;
    let buoyancy = params.kappa * params.gravity / params.theta_ref;
    let scales = |inv_l: f64| {
        let u_star = (params.kappa * speed / params.momentum_factor(z_eval, inv_l)).max(floor);
        let theta_star = params.kappa * delta_theta / params.heat_factor(z_eval, inv_l);
        (u_star, theta_star)
    };
    let next_inv_l = |u_star: f64, theta_star: f64| buoyancy * theta_star / (u_star * u_star);

    let mut inv_l = if delta_theta == 0.0 { 0.0 } else { prev.inverse_obukhov() };
    if delta_theta != 0.0 && inv_l * delta_theta < 0.0 {
        inv_l = 0.0;
    }
    let (mut u_star, mut theta_star) = scales(inv_l);
    let mut converged = delta_theta == 0.0;
    let mut iterations = 0;
    let mut damped = false;
    let mut last_change = 0.0;
    while !converged && iterations < BULK_MAX_ITER {
        iterations += 1;
        let target = next_inv_l(u_star, theta_star);
        inv_l = if damped { 0.5 * (inv_l + target) } else { target };
        let (u_new, t_new) = scales(inv_l);
        let change = u_new - u_star;
        if change * last_change < 0.0 {
            damped = true;
        }
        last_change = change;
        converged = change.abs() < BULK_TOL * u_new;
        u_star = u_new;
        theta_star = t_new;
    }
    let obukhov_length = if inv_l == 0.0 { f64::INFINITY } else { 1.0 / inv_l };
    BulkResult {
        state: SurfaceState { u_star, theta_star, e_tau, delta_a: prev.delta_a, obukhov_length },
        converged,
        iterations,
    }
}

fn check_sl_domain(z: f64, state: &SurfaceState) -> Result<()> {
    let tol = 1e-12 * state.delta_a.max(1.0);
    if !(z >= -tol && z <= state.delta_a + tol) {
        return Err(Error::OutOfDomain { z, lo: 0.0, hi: state.delta_a });
    }
    Ok(())
}

/// Surface-layer wind profile; zero at the ground.
pub fn mo_profile_u(z: f64, state: &SurfaceState, params: &MoParameters) -> Result<Complex64> {
    check_sl_domain(z, state)?;
    Ok(state.e_tau * (state.u_star / params.kappa * params.momentum_factor(z.max(0.0), state.inverse_obukhov())))
}

/// Surface-layer potential temperature for surface temperature `theta_s`.
pub fn mo_profile_theta(z: f64, theta_s: f64, state: &SurfaceState, params: &MoParameters) -> Result<f64> {
    check_sl_domain(z, state)?;
    Ok(theta_s + state.theta_star / params.kappa * params.heat_factor(z.max(0.0), state.inverse_obukhov()))
}

/// Eddy viscosity that keeps the stress constant through the surface layer.
pub fn mo_viscosity(z: f64, state: &SurfaceState, params: &MoParameters) -> Result<f64> {
    check_sl_domain(z, state)?;
    Ok(mo_viscosity_unchecked(z, state, params))
}

pub(crate) fn mo_viscosity_unchecked(z: f64, state: &SurfaceState, params: &MoParameters) -> f64 {
    let zr = params.roughness;
    params.kappa * state.u_star * (z + zr) / params.phi_m((z + zr) * state.inverse_obukhov())
}

/// Eddy diffusivity for heat matching the surface-layer temperature profile.
pub fn mo_diffusivity_heat(z: f64, state: &SurfaceState, params: &MoParameters) -> f64 {
    let zr = params.roughness;
    params.kappa * state.u_star * (z + zr) / params.phi_h((z + zr) * state.inverse_obukhov())
}

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL8_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Integral of `f` over `[z_lo, z_hi]` by Gauss-Legendre in the log-stretched
/// coordinate `s = ln(1 + z/z_r)`, in which surface-layer profiles are smooth.
pub(crate) fn integrate_log_coordinate(f: impl Fn(f64) -> f64, z_lo: f64, z_hi: f64, zr: f64) -> f64 {
    if z_hi <= z_lo {
        return 0.0;
    }
    let (s_lo, s_hi) = ((z_lo / zr).ln_1p(), (z_hi / zr).ln_1p());
    const PANELS: usize = 8;
    let ds = (s_hi - s_lo) / PANELS as f64;
    let mut acc = 0.0;
    for p in 0..PANELS {
        let mid = s_lo + (p as f64 + 0.5) * ds;
        for (x, w) in GL8_X.iter().zip(GL8_W) {
            let s = mid + 0.5 * ds * x;
            let z = zr * s.exp_m1();
            acc += w * f(z) * zr * s.exp();
        }
    }
    0.5 * ds * acc
}

/// `int_{z_lo}^{z_hi} u_MO(z) dz` over part of the surface layer.
pub fn sl_wind_integral(z_lo: f64, z_hi: f64, state: &SurfaceState, params: &MoParameters) -> Complex64 {
    let inv_l = state.inverse_obukhov();
    let scalar = integrate_log_coordinate(|z| params.momentum_factor(z, inv_l), z_lo, z_hi, params.roughness);
    state.e_tau * (state.u_star / params.kappa * scalar)
}

/// `int_{z_lo}^{z_hi} theta_MO(z) dz`.
pub fn sl_theta_integral(z_lo: f64, z_hi: f64, theta_s: f64, state: &SurfaceState, params: &MoParameters) -> f64 {
    let inv_l = state.inverse_obukhov();
    let scalar = integrate_log_coordinate(|z| params.heat_factor(z, inv_l), z_lo, z_hi, params.roughness);
    theta_s * (z_hi - z_lo) + state.theta_star / params.kappa * scalar
}

/// Surface coupling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// Finite differences, bulk input at the first cell center.
    Fd,
    /// Usual finite-volume practice: cell mean used as the wind at z_{1/2}.
    Fv1,
    /// Surface layer pinned to the first interface z_1.
    Fv2,
    /// Surface layer of free height with the spline matched to the MO profile.
    FvFree,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [SchemeKind::Fd, SchemeKind::Fv1, SchemeKind::Fv2, SchemeKind::FvFree];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Fd => "fd",
            SchemeKind::Fv1 => "fv1",
            SchemeKind::Fv2 => "fv2",
            SchemeKind::FvFree => "fvfree",
        }
    }

    /// Height of the surface layer this scheme uses on `grid`. Only the
    /// free scheme honors `requested`; it defaults to the first cell center.
    pub fn surface_layer_height(self, grid: &VerticalGrid, requested: Option<f64>) -> f64 {
        match self {
            SchemeKind::Fd => grid.centers()[0],
            SchemeKind::Fv1 | SchemeKind::Fv2 => grid.interfaces()[1],
            SchemeKind::FvFree => requested.unwrap_or(grid.centers()[0]),
        }
    }

    /// Whether the surface layer is removed from the computational domain.
    pub fn excludes_surface_layer(self) -> bool {
        matches!(self, SchemeKind::Fv2 | SchemeKind::FvFree)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fd" => Ok(SchemeKind::Fd),
            "fv1" => Ok(SchemeKind::Fv1),
            "fv2" => Ok(SchemeKind::Fv2),
            "fvfree" | "fv_free" | "fv-free" => Ok(SchemeKind::FvFree),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected fd, fv1, fv2, fvfree)"))),
        }
    }
}

/// Where the bulk routine samples the resolved wind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPoint {
    /// The first cell value, read as the wind at the first cell center.
    FirstCellValue { z: f64 },
    /// The spline of the first resolved cell at its lower edge `delta_a`.
    SplineLowerEdge { z: f64 },
}

impl EvalPoint {
    pub fn height(self) -> f64 {
        match self {
            EvalPoint::FirstCellValue { z } | EvalPoint::SplineLowerEdge { z } => z,
        }
    }
}

/// Bottom row of the momentum system for one scheme.
///
/// The stress is `u_*^2 u^{n+1}(eval) / |u^n(eval)|`: the direction is taken
/// from the new wind and normalized by the old speed, so the row stays linear.
///
/// * `k_edge` multiplies the derivative at the bottom interface of the
///   computational domain.
/// * `h_first` is the size of the first computational cell (the sub-cell for
///   the schemes that exclude the surface layer).
/// * `u_eval_prev` is the wind at the evaluation point at the start of the step.
pub fn boundary_row(
    eval: EvalPoint,
    state: &SurfaceState,
    k_edge: f64,
    h_first: f64,
    u_eval_prev: Complex64,
) -> BoundaryRow<Complex64> {
    let speed = u_eval_prev.norm();
    let u2 = state.u_star * state.u_star;
    let zero = Complex64::new(0.0, 0.0);
    if speed == 0.0 {
        return BoundaryRow { phi_edge: Complex64::new(k_edge, 0.0), mean: zero, phi_inner: zero, rhs: state.stress() };
    }
    let c = u2 / speed;
    match eval {
        EvalPoint::FirstCellValue { .. } => BoundaryRow {
            phi_edge: Complex64::new(k_edge, 0.0),
            mean: Complex64::new(-c, 0.0),
            phi_inner: zero,
            rhs: zero,
        },
        // u(delta_a) = mean - h/3 phi_delta - h/6 phi_1
        EvalPoint::SplineLowerEdge { .. } => BoundaryRow {
            phi_edge: Complex64::new(k_edge + c * h_first / 3.0, 0.0),
            mean: Complex64::new(-c, 0.0),
            phi_inner: Complex64::new(c * h_first / 6.0, 0.0),
            rhs: zero,
        },
    }
}

/// Bottom row of the temperature system: `K_theta phi = u_* theta_*`, with the
/// transfer coefficient frozen and the air-surface difference taken at the new step.
pub fn heat_row(
    eval: EvalPoint,
    state: &SurfaceState,
    params: &MoParameters,
    k_edge: f64,
    h_first: f64,
    theta_surface_next: f64,
) -> BoundaryRow<f64> {
    let c = state.u_star * params.kappa / params.heat_factor(eval.height(), state.inverse_obukhov());
    match eval {
        EvalPoint::FirstCellValue { .. } => {
            BoundaryRow { phi_edge: k_edge, mean: -c, phi_inner: 0.0, rhs: -c * theta_surface_next }
        }
        EvalPoint::SplineLowerEdge { .. } => BoundaryRow {
            phi_edge: k_edge + c * h_first / 3.0,
            mean: -c,
            phi_inner: c * h_first / 6.0,
            rhs: -c * theta_surface_next,
        },
    }
}

/// Spline term `u_*^2 e_tau h / (6 K_0)` through which the bottom viscosity
/// enters the value at the first interface when the first cell is reconstructed
/// with a parabola.
pub fn first_interface_k0_term(state: &SurfaceState, k0: f64, h_first: f64) -> Complex64 {
    state.stress() * (h_first / (6.0 * k0))
}
