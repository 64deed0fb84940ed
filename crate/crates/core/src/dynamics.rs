//! Implicit-Euler integration of the finite-volume column.
//!
//! Each step solves one banded system for the cell means and interface
//! derivatives of the wind,
//!
//! ```text
//! (1 + i f dt) u_j - dt/h_j (K_{j+1} phi_{j+1} - K_j phi_j) = u_j^n + i f dt u_G
//! ```
//!
//! closed by the compact spline relation at interior interfaces and one row at
//! each end. Unknowns are interleaved as `phi_0, u_0, phi_1, u_1, ..., phi_N`,
//! which makes the matrix pentadiagonal. Potential temperature follows the same
//! path without rotation. Eddy coefficients and friction scales are frozen at
//! the start of the step; the surface state and the TKE are refreshed after the
//! solve.

use num_complex::Complex64;
use serde::Serialize;

use crate::banded::BandedMatrix;
use crate::closure::{initial_tke, step_tke, TkeBottom, TkeConstants, TkeMesh, TkeState, TkeStepOptions};
use crate::error::{Error, Result};
use crate::grid::VerticalGrid;
use crate::scalar::Scalar;
use crate::spline::{BoundaryRow, CellSpline};
use crate::surface::{
    boundary_row, bulk, heat_row, mo_diffusivity_heat, mo_profile_theta, mo_profile_u, mo_viscosity_unchecked,
    sl_theta_integral, sl_wind_integral, EvalPoint, MoParameters, SchemeKind, SurfaceState,
};

/// Initial potential temperature: `value` up to `mixed_depth`, then increasing
/// by `lapse_rate` K/m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaProfile {
    pub value: f64,
    pub mixed_depth: f64,
    pub lapse_rate: f64,
}

impl ThetaProfile {
    pub fn at(&self, z: f64) -> f64 {
        self.value + self.lapse_rate * (z - self.mixed_depth).max(0.0)
    }

    pub fn derivative(&self, z: f64) -> f64 {
        if z > self.mixed_depth {
            self.lapse_rate
        } else {
            0.0
        }
    }

    /// Exact average over `[z0, z1]`.
    pub fn average(&self, z0: f64, z1: f64) -> f64 {
        let prim = |z: f64| {
            let above = (z - self.mixed_depth).max(0.0);
            self.value * z + 0.5 * self.lapse_rate * above * above
        };
        (prim(z1) - prim(z0)) / (z1 - z0)
    }
}

/// Surface temperature `start + trend t - amplitude cos(2 pi t / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceForcing {
    pub start: f64,
    pub trend: f64,
    pub amplitude: f64,
    pub period: f64,
}

impl SurfaceForcing {
    pub fn at(&self, t: f64) -> f64 {
        let osc = if self.amplitude != 0.0 {
            self.amplitude * (2.0 * std::f64::consts::PI * t / self.period).cos()
        } else {
            0.0
        };
        self.start + self.trend * t - osc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stratification {
    Neutral,
    Stratified { initial: ThetaProfile, surface: SurfaceForcing },
}

impl Stratification {
    /// Stable case: 265 K in the lowest 100 m, +1 K per 100 m above, surface
    /// cooling by 1 K every ten hours.
    pub fn stable() -> Self {
        Stratification::Stratified {
            initial: ThetaProfile { value: 265.0, mixed_depth: 100.0, lapse_rate: 0.01 },
            surface: SurfaceForcing { start: 265.0, trend: -1.0 / 36_000.0, amplitude: 0.0, period: 86_400.0 },
        }
    }

    /// Unstable case: uniform 280 K, surface oscillating between 279 and 281 K daily.
    pub fn unstable() -> Self {
        Stratification::Stratified {
            initial: ThetaProfile { value: 280.0, mixed_depth: 0.0, lapse_rate: 0.0 },
            surface: SurfaceForcing { start: 280.0, trend: 0.0, amplitude: 1.0, period: 86_400.0 },
        }
    }

    pub fn is_neutral(&self) -> bool {
        matches!(self, Stratification::Neutral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Viscosity {
    /// TKE closure above the surface layer.
    Closure,
    /// Prescribed constant viscosity and diffusivity, m^2/s.
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BottomBoundary {
    /// Surface-layer coupling of the configured scheme.
    Surface,
    /// `u(0) = 0`, for analytic checks.
    NoSlip,
    /// No stress at the ground.
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopBoundary {
    ZeroFlux,
    /// Wind at the top interface held at the geostrophic value.
    Geostrophic,
}

/// Viscosity multiplying the ground derivative when the first cell is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BottomViscosity {
    /// Surface-layer viscosity at the surface-layer height.
    SurfaceLayer,
    /// Molecular viscosity.
    Molecular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub coriolis: f64,
    pub geostrophic_wind: Complex64,
    pub initial_wind: Complex64,
    pub dt: f64,
    pub duration: f64,
    pub scheme: SchemeKind,
    /// Surface-layer height for the free scheme; defaults to the first cell center.
    pub delta_a: Option<f64>,
    pub grid: VerticalGrid,
    pub stratification: Stratification,
    pub mo: MoParameters,
    pub closure: TkeConstants,
    pub viscosity: Viscosity,
    pub bottom: BottomBoundary,
    pub top: TopBoundary,
    pub bottom_viscosity: BottomViscosity,
    pub sub_iterations: usize,
}

impl SimulationConfig {
    /// Neutral Ekman layer with the given scheme and grid, other settings at defaults.
    pub fn neutral(scheme: SchemeKind, grid: VerticalGrid) -> Self {
        SimulationConfig {
            coriolis: 1e-4,
            geostrophic_wind: Complex64::new(8.0, 0.0),
            initial_wind: Complex64::new(8.0, 0.0),
            dt: 30.0,
            duration: 86_400.0,
            scheme,
            delta_a: None,
            grid,
            stratification: Stratification::Neutral,
            mo: MoParameters::default(),
            closure: TkeConstants::default(),
            viscosity: Viscosity::Closure,
            bottom: BottomBoundary::Surface,
            top: TopBoundary::ZeroFlux,
            bottom_viscosity: BottomViscosity::SurfaceLayer,
            sub_iterations: 1,
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize
    }

    pub fn surface_layer_height(&self) -> f64 {
        self.scheme.surface_layer_height(&self.grid, self.delta_a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= self.dt) {
            return Err(Error::Parameter(format!("duration {} shorter than dt {}", self.duration, self.dt)));
        }
        if self.coriolis == 0.0 || !self.coriolis.is_finite() {
            return Err(Error::Parameter("Coriolis parameter must be nonzero".into()));
        }
        if self.sub_iterations == 0 {
            return Err(Error::Parameter("sub_iterations must be at least 1".into()));
        }
        if let Viscosity::Constant(k) = self.viscosity {
            if !(k >= 0.0) {
                return Err(Error::Parameter(format!("constant viscosity must be non-negative, got {k}")));
            }
        }
        self.mo.validate()?;
        self.closure.validate()?;
        if let Some(d) = self.delta_a {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Parameter(format!("delta_a must be positive, got {d}")));
            }
        }
        if self.bottom == BottomBoundary::Surface && self.scheme.excludes_surface_layer() {
            let d = self.surface_layer_height();
            let z = self.grid.interfaces();
            if d >= z[z.len() - 2] {
                return Err(Error::Unsupported(format!(
                    "surface layer height {d} m leaves fewer than two resolved cells"
                )));
            }
        }
        Ok(())
    }
}

/// How the configured scheme lays the resolved column over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub scheme: SchemeKind,
    pub delta_a: f64,
    /// Grid cell holding the bottom of the resolved column.
    pub first_cell: usize,
    /// Interfaces of the resolved column; the first is `delta_a` when the
    /// surface layer is excluded.
    pub interfaces: Vec<f64>,
    pub eval: EvalPoint,
    /// Compact spline relation at interior interfaces, or the two-point
    /// difference `h phi = u_j - u_{j-1}` of the finite-difference scheme.
    pub compact: bool,
}

impl Layout {
    pub fn new(config: &SimulationConfig) -> Result<Self> {
        let grid = &config.grid;
        let scheme = config.scheme;
        let delta_a = config.surface_layer_height();
        let full = || grid.interfaces().to_vec();
        let layout = if config.bottom != BottomBoundary::Surface || !scheme.excludes_surface_layer() {
            Layout {
                scheme,
                delta_a,
                first_cell: 0,
                interfaces: full(),
                eval: EvalPoint::FirstCellValue { z: grid.centers()[0] },
                compact: scheme != SchemeKind::Fd,
            }
        } else {
            let k = grid
                .cell_containing(delta_a)
                .ok_or_else(|| Error::Unsupported(format!("surface layer height {delta_a} m outside the grid")))?;
            let mut interfaces = Vec::with_capacity(grid.n_cells() - k + 1);
            interfaces.push(delta_a);
            interfaces.extend_from_slice(&grid.interfaces()[k + 1..]);
            Layout {
                scheme,
                delta_a,
                first_cell: k,
                interfaces,
                eval: EvalPoint::SplineLowerEdge { z: delta_a },
                compact: true,
            }
        };
        if layout.interfaces.len() < 3 {
            return Err(Error::Unsupported("resolved column needs at least two cells".into()));
        }
        Ok(layout)
    }

    pub fn n_cells(&self) -> usize {
        self.interfaces.len() - 1
    }

    pub fn sizes(&self) -> Vec<f64> {
        self.interfaces.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn h_first(&self) -> f64 {
        self.interfaces[1] - self.interfaces[0]
    }

    /// Value at the evaluation point from resolved means and derivatives.
    fn eval_value<T: Scalar>(&self, means: &[T], phi: &[T]) -> T {
        match self.eval {
            EvalPoint::FirstCellValue { .. } => means[0],
            EvalPoint::SplineLowerEdge { .. } => {
                let h = self.h_first();
                means[0] - phi[0] * (h / 3.0) - phi[1] * (h / 6.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnState {
    pub time: f64,
    pub step: usize,
    /// Means over the resolved cells.
    pub u: Vec<Complex64>,
    /// Derivatives at the resolved interfaces.
    pub phi_u: Vec<Complex64>,
    pub theta: Option<Vec<f64>>,
    pub phi_theta: Option<Vec<f64>>,
    pub surface: SurfaceState,
    pub tke: TkeState,
}

/// Per-step checks recorded by [`Column::step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Telescoped momentum budget residual relative to the size of its terms.
    pub budget_residual: f64,
    /// Mismatch between the surface-layer profile and the spline at the
    /// surface-layer height, relative to the largest wind; zero for schemes
    /// that keep the first cell resolved.
    pub continuity: f64,
    pub bulk_converged: bool,
}

/// A configured column: grid layout plus physics.
#[derive(Debug, Clone)]
pub struct Column {
    config: SimulationConfig,
    layout: Layout,
}

struct LinearColumn<'a, T> {
    interfaces: &'a [f64],
    compact: bool,
    dt: f64,
    /// Coefficient of the cell mean besides 1 (`i f dt` for the wind).
    reaction: T,
    /// Constant source per step (`i f dt u_G`).
    source: T,
    k: &'a [f64],
}

impl<T: Scalar> LinearColumn<'_, T> {
    fn solve(&self, prev: &[T], bottom: BoundaryRow<T>, top: BoundaryRow<T>) -> Result<(Vec<T>, Vec<T>)> {
        let n = prev.len();
        let h: Vec<f64> = self.interfaces.windows(2).map(|w| w[1] - w[0]).collect();
        let size = 2 * n + 1;
        let mut a = BandedMatrix::<T>::zeros(size, 2, 2);
        let mut b = vec![T::zero(); size];
        let one = T::from_real(1.0);

        a.set(0, 0, bottom.phi_edge);
        a.set(0, 1, bottom.mean);
        a.set(0, 2, bottom.phi_inner);
        b[0] = bottom.rhs;
        for j in 0..n {
            let r = 2 * j + 1;
            a.set(r, r - 1, T::from_real(self.dt * self.k[j] / h[j]));
            a.set(r, r, one + self.reaction);
            a.set(r, r + 1, T::from_real(-self.dt * self.k[j + 1] / h[j]));
            b[r] = prev[j] + self.source;
        }
        for m in 1..n {
            let r = 2 * m;
            if self.compact {
                a.set(r, r - 2, T::from_real(h[m - 1] / 6.0));
                a.set(r, r, T::from_real((h[m - 1] + h[m]) / 3.0));
                a.set(r, r + 2, T::from_real(h[m] / 6.0));
            } else {
                a.set(r, r, T::from_real(0.5 * (h[m - 1] + h[m])));
            }
            a.set(r, r - 1, one);
            a.set(r, r + 1, -one);
        }
        let r = 2 * n;
        a.set(r, r, top.phi_edge);
        a.set(r, r - 1, top.mean);
        a.set(r, r - 2, top.phi_inner);
        b[r] = top.rhs;

        let x = a.solve(&b)?;
        let means = (0..n).map(|j| x[2 * j + 1]).collect();
        let phi = (0..=n).map(|m| x[2 * m]).collect();
        Ok((means, phi))
    }
}

fn all_finite<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl Column {
    pub fn new(config: SimulationConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config)?;
        Ok(Column { config, layout })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn tke_mesh(&self) -> TkeMesh<'_> {
        TkeMesh {
            interfaces: &self.layout.interfaces,
            roughness: self.config.mo.roughness,
            kappa: self.config.mo.kappa,
        }
    }

    pub fn surface_temperature(&self, t: f64) -> Option<f64> {
        match self.config.stratification {
            Stratification::Neutral => None,
            Stratification::Stratified { surface, .. } => Some(surface.at(t)),
        }
    }

    /// Initial state: uniform wind, zero derivatives, TKE at its floor.
    pub fn initial_state(&self) -> Result<ColumnState> {
        let n = self.layout.n_cells();
        let u = vec![self.config.initial_wind; n];
        let phi_u = vec![Complex64::new(0.0, 0.0); n + 1];
        let (theta, phi_theta) = match self.config.stratification {
            Stratification::Neutral => (None, None),
            Stratification::Stratified { initial, .. } => {
                let th = self.layout.interfaces.windows(2).map(|w| initial.average(w[0], w[1])).collect();
                let ph = self.layout.interfaces.iter().map(|z| initial.derivative(*z)).collect();
                (Some(th), Some(ph))
            }
        };
        let dir = if self.config.initial_wind.norm() > 0.0 {
            self.config.initial_wind / self.config.initial_wind.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let seed = SurfaceState::neutral(self.config.mo.u_star_floor, dir, self.layout.delta_a);
        let mut state = ColumnState {
            time: 0.0,
            step: 0,
            u,
            phi_u,
            theta,
            phi_theta,
            surface: seed,
            tke: initial_tke(&self.tke_mesh(), self.config.closure.e_min, &self.config.closure),
        };
        state.surface = self.surface_from(&state, 0.0, &seed).state;
        self.apply_edge_coefficients(&mut state.tke, &state.surface);
        Ok(state)
    }

    fn surface_from(&self, state: &ColumnState, t: f64, prev: &SurfaceState) -> crate::surface::BulkResult {
        let u_eval = self.layout.eval_value(&state.u, &state.phi_u);
        let dtheta = match (&state.theta, &state.phi_theta, self.surface_temperature(t)) {
            (Some(th), Some(ph), Some(ts)) => self.layout.eval_value(th, ph) - ts,
            _ => 0.0,
        };
        let mut r = bulk(u_eval, dtheta, self.layout.eval.height(), &self.config.mo, prev);
        r.state.delta_a = self.layout.delta_a;
        r
    }

    /// `(K_u, K_theta)` at the bottom interface of the resolved column.
    fn edge_coefficients(&self, surface: &SurfaceState, tke: &TkeState) -> (f64, f64) {
        if let Viscosity::Constant(k) = self.config.viscosity {
            return (k, k);
        }
        if self.config.bottom != BottomBoundary::Surface {
            return (tke.k_u[0], tke.k_theta[0]);
        }
        let d = self.layout.delta_a;
        let k_theta = mo_diffusivity_heat(d, surface, &self.config.mo);
        match self.config.bottom_viscosity {
            BottomViscosity::SurfaceLayer => (mo_viscosity_unchecked(d, surface, &self.config.mo), k_theta),
            BottomViscosity::Molecular => (self.config.mo.molecular_viscosity, k_theta),
        }
    }

    fn apply_edge_coefficients(&self, tke: &mut TkeState, surface: &SurfaceState) {
        let (ku, kt) = self.edge_coefficients(surface, tke);
        tke.k_u[0] = ku;
        tke.k_theta[0] = kt;
    }

    fn coefficients(&self, state: &ColumnState) -> (Vec<f64>, Vec<f64>) {
        let n = self.layout.n_cells();
        match self.config.viscosity {
            Viscosity::Constant(k) => (vec![k; n + 1], vec![k; n + 1]),
            Viscosity::Closure => {
                let mut ku = state.tke.k_u.clone();
                let mut kt = state.tke.k_theta.clone();
                let (e_u, e_t) = self.edge_coefficients(&state.surface, &state.tke);
                ku[0] = e_u;
                kt[0] = e_t;
                (ku, kt)
            }
        }
    }

    fn momentum_rows(
        &self,
        surface: &SurfaceState,
        k_edge: f64,
        u_eval_prev: Complex64,
    ) -> (BoundaryRow<Complex64>, BoundaryRow<Complex64>) {
        let zero = Complex64::new(0.0, 0.0);
        let h = self.layout.sizes();
        let bottom = match self.config.bottom {
            BottomBoundary::Surface => boundary_row(self.layout.eval, surface, k_edge, h[0], u_eval_prev),
            BottomBoundary::ZeroFlux => BoundaryRow::derivative(zero),
            BottomBoundary::NoSlip if self.layout.compact => BoundaryRow::edge_value(h[0], zero, true),
            BottomBoundary::NoSlip => BoundaryRow {
                phi_edge: Complex64::new(0.5 * h[0], 0.0),
                mean: Complex64::new(-1.0, 0.0),
                phi_inner: zero,
                rhs: zero,
            },
        };
        let h_top = *h.last().unwrap();
        let u_g = self.config.geostrophic_wind;
        let top = match self.config.top {
            TopBoundary::ZeroFlux => BoundaryRow::derivative(zero),
            TopBoundary::Geostrophic if self.layout.compact => BoundaryRow::edge_value(h_top, u_g, false),
            TopBoundary::Geostrophic => BoundaryRow {
                phi_edge: Complex64::new(0.5 * h_top, 0.0),
                mean: Complex64::new(1.0, 0.0),
                phi_inner: zero,
                rhs: u_g,
            },
        };
        (bottom, top)
    }

    /// Advances the column by one step.
    pub fn step(&self, state: &ColumnState) -> Result<(ColumnState, StepDiagnostics)> {
        let cfg = &self.config;
        let dt = cfg.dt;
        let t_next = state.time + dt;
        let (k_u, k_theta) = self.coefficients(state);
        let momentum = LinearColumn {
            interfaces: &self.layout.interfaces,
            compact: self.layout.compact,
            dt,
            reaction: Complex64::new(0.0, cfg.coriolis * dt),
            source: Complex64::new(0.0, cfg.coriolis * dt) * cfg.geostrophic_wind,
            k: &k_u,
        };
        let heat = LinearColumn {
            interfaces: &self.layout.interfaces,
            compact: self.layout.compact,
            dt,
            reaction: 0.0,
            source: 0.0,
            k: &k_theta,
        };
        let theta_s_next = self.surface_temperature(t_next);

        let mut surface = state.surface;
        let mut u_eval_prev = self.layout.eval_value(&state.u, &state.phi_u);
        let mut next = state.clone();
        let mut converged = true;
        for _ in 0..cfg.sub_iterations {
            let (bottom, top) = self.momentum_rows(&surface, k_u[0], u_eval_prev);
            let (u, phi_u) = momentum.solve(&state.u, bottom, top)?;
            if !all_finite(&u) || !all_finite(&phi_u) {
                return Err(Error::NonFinite { step: state.step + 1, what: "wind".into() });
            }
            next.u = u;
            next.phi_u = phi_u;
            if let (Some(theta), Some(ts)) = (&state.theta, theta_s_next) {
                let bottom = match cfg.bottom {
                    BottomBoundary::Surface => {
                        heat_row(self.layout.eval, &surface, &cfg.mo, k_theta[0], self.layout.h_first(), ts)
                    }
                    _ => BoundaryRow::derivative(0.0),
                };
                let (th, ph) = heat.solve(theta, bottom, BoundaryRow::derivative(0.0))?;
                if !all_finite(&th) || !all_finite(&ph) {
                    return Err(Error::NonFinite { step: state.step + 1, what: "potential temperature".into() });
                }
                next.theta = Some(th);
                next.phi_theta = Some(ph);
            }
            next.time = t_next;
            let r = self.surface_from(&next, t_next, &surface);
            converged = r.converged;
            u_eval_prev = self.layout.eval_value(&next.u, &next.phi_u);
            surface = r.state;
        }
        next.step = state.step + 1;
        next.surface = surface;

        let budget_residual = self.budget_residual(&state.u, &next, &k_u);
        let continuity = self.continuity_mismatch(&next)?;

        if cfg.viscosity == Viscosity::Closure {
            let mut frozen = state.tke.clone();
            frozen.k_u = k_u.clone();
            frozen.k_theta = k_theta.clone();
            let mut shear2: Vec<f64> = next.phi_u.iter().map(|p| p.norm_sqr()).collect();
            if cfg.bottom == BottomBoundary::Surface {
                // the surface layer owns the bottom interface: production there is
                // the similarity value whatever viscosity multiplies phi_0
                let k_sl = mo_viscosity_unchecked(self.layout.delta_a, &state.surface, &cfg.mo);
                let s = state.surface.u_star * state.surface.u_star / k_sl;
                shear2[0] = s * s;
                frozen.k_u[0] = k_sl;
            }
            let n2: Vec<f64> = match &next.phi_theta {
                Some(ph) => ph.iter().map(|d| cfg.mo.gravity / cfg.mo.theta_ref * d).collect(),
                None => vec![0.0; shear2.len()],
            };
            let bottom = match cfg.bottom {
                BottomBoundary::Surface => TkeBottom::Value(cfg.closure.surface_tke(surface.u_star)),
                _ => TkeBottom::ZeroFlux,
            };
            let mut tke =
                step_tke(&frozen, &shear2, &n2, dt, &self.tke_mesh(), bottom, &cfg.closure, TkeStepOptions::default())?;
            self.apply_edge_coefficients(&mut tke, &surface);
            next.tke = tke;
        }
        Ok((next, StepDiagnostics { budget_residual, continuity, bulk_converged: converged }))
    }

    /// Telescoped momentum budget of the step that produced `next` from `prev_u`.
    fn budget_residual(&self, prev_u: &[Complex64], next: &ColumnState, k: &[f64]) -> f64 {
        let cfg = &self.config;
        let h = self.layout.sizes();
        let n = h.len();
        let i_f = Complex64::new(0.0, cfg.coriolis);
        let mut tendency = Complex64::new(0.0, 0.0);
        let mut rotation = Complex64::new(0.0, 0.0);
        let mut scale = 0.0;
        for j in 0..n {
            tendency += (next.u[j] - prev_u[j]) * (h[j] / cfg.dt);
            rotation += i_f * (next.u[j] - cfg.geostrophic_wind) * h[j];
            scale += h[j]
                * ((next.u[j].norm() + prev_u[j].norm()) / cfg.dt
                    + cfg.coriolis.abs() * (next.u[j].norm() + cfg.geostrophic_wind.norm()));
        }
        let top_flux = next.phi_u[n] * k[n];
        let bottom_flux = next.phi_u[0] * k[0];
        scale += top_flux.norm() + bottom_flux.norm();
        let residual = tendency + rotation - (top_flux - bottom_flux);
        if scale == 0.0 {
            0.0
        } else {
            residual.norm() / scale
        }
    }

    fn continuity_mismatch(&self, state: &ColumnState) -> Result<f64> {
        if !(self.config.bottom == BottomBoundary::Surface && self.config.scheme.excludes_surface_layer()) {
            return Ok(0.0);
        }
        let spline = self.layout.eval_value(&state.u, &state.phi_u);
        let mo = mo_profile_u(self.layout.delta_a, &state.surface, &self.config.mo)?;
        let norm = state.u.iter().map(|u| u.norm()).fold(0.0, f64::max);
        Ok(if norm > 0.0 { (mo - spline).norm() / norm } else { 0.0 })
    }

    /// Spline of resolved cell `j`.
    pub fn cell_spline(&self, state: &ColumnState, j: usize) -> Result<CellSpline<Complex64>> {
        let z = &self.layout.interfaces;
        CellSpline::new(state.u[j], z[j + 1] - z[j], state.phi_u[j], state.phi_u[j + 1], 0.5 * (z[j] + z[j + 1]))
    }

    /// Wind at the upper interface of the first grid cell reconstructed by its spline.
    pub fn wind_at_first_interface(&self, state: &ColumnState) -> Result<Complex64> {
        let z1 = self.config.grid.interfaces()[1];
        if self.layout.interfaces[0] >= z1 {
            return mo_profile_u(z1, &state.surface, &self.config.mo);
        }
        Ok(self.cell_spline(state, 0)?.value_at_upper())
    }

    /// Wind averaged over every cell of the configured grid, including the
    /// surface-layer share of cells cut by `delta_a`.
    pub fn grid_wind_means(&self, state: &ColumnState) -> Vec<Complex64> {
        let grid = &self.config.grid;
        let k = self.layout.first_cell;
        if self.layout.interfaces[0] == 0.0 {
            return state.u.clone();
        }
        let z = grid.interfaces();
        let h = grid.cell_sizes();
        let mo = &self.config.mo;
        let mut out = Vec::with_capacity(grid.n_cells());
        for j in 0..k {
            out.push(sl_wind_integral(z[j], z[j + 1], &state.surface, mo) / h[j]);
        }
        let d = self.layout.delta_a;
        let h_sub = z[k + 1] - d;
        out.push((sl_wind_integral(z[k], d, &state.surface, mo) + state.u[0] * h_sub) / h[k]);
        out.extend_from_slice(&state.u[1..]);
        out
    }

    /// Potential temperature averaged over every grid cell.
    pub fn grid_theta_means(&self, state: &ColumnState) -> Option<Vec<f64>> {
        let theta = state.theta.as_ref()?;
        let k = self.layout.first_cell;
        if self.layout.interfaces[0] == 0.0 {
            return Some(theta.clone());
        }
        let ts = self.surface_temperature(state.time)?;
        let grid = &self.config.grid;
        let z = grid.interfaces();
        let h = grid.cell_sizes();
        let mo = &self.config.mo;
        let mut out = Vec::with_capacity(grid.n_cells());
        for j in 0..k {
            out.push(sl_theta_integral(z[j], z[j + 1], ts, &state.surface, mo) / h[j]);
        }
        let d = self.layout.delta_a;
        out.push((sl_theta_integral(z[k], d, ts, &state.surface, mo) + theta[0] * (z[k + 1] - d)) / h[k]);
        out.extend_from_slice(&theta[1..]);
        Some(out)
    }

    /// Surface-layer temperature at `z`, for cells excluded from the resolved column.
    pub fn surface_layer_theta(&self, state: &ColumnState, z: f64) -> Result<Option<f64>> {
        match self.surface_temperature(state.time) {
            Some(ts) => Ok(Some(mo_profile_theta(z, ts, &state.surface, &self.config.mo)?)),
            None => Ok(None),
        }
    }
}

/// When profile snapshots are taken during [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sampling {
    /// Snapshot interval in seconds; the final state is always kept.
    pub every: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub wind: Vec<Complex64>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    /// Times of the friction-velocity series, starting at 0.
    pub times: Vec<f64>,
    pub u_star: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub max_budget_residual: f64,
    pub max_continuity: f64,
    pub unconverged_bulk_steps: usize,
    #[serde(skip)]
    pub final_state: ColumnState,
}

impl RunOutput {
    pub fn final_snapshot(&self) -> &Snapshot {
        self.snapshots.last().expect("final snapshot always recorded")
    }
}

/// Runs `duration / dt` steps from the initial state.
pub fn integrate(config: &SimulationConfig, sampling: Sampling) -> Result<RunOutput> {
    let column = Column::new(config.clone())?;
    integrate_column(&column, sampling)
}

pub fn integrate_column(column: &Column, sampling: Sampling) -> Result<RunOutput> {
    let n_steps = column.config().n_steps();
    let mut state = column.initial_state()?;
    let snap =
        |s: &ColumnState| Snapshot { time: s.time, wind: column.grid_wind_means(s), theta: column.grid_theta_means(s) };
    let mut out = RunOutput {
        times: Vec::with_capacity(n_steps + 1),
        u_star: Vec::with_capacity(n_steps + 1),
        snapshots: Vec::new(),
        max_budget_residual: 0.0,
        max_continuity: 0.0,
        unconverged_bulk_steps: 0,
        final_state: state.clone(),
    };
    out.times.push(0.0);
    out.u_star.push(state.surface.u_star);
    let every_steps = sampling.every.map(|e| ((e / column.config().dt).round() as usize).max(1));
    if every_steps.is_some() {
        out.snapshots.push(snap(&state));
    }
    for _ in 0..n_steps {
        let (next, diag) = column.step(&state)?;
        state = next;
        out.times.push(state.time);
        out.u_star.push(state.surface.u_star);
        out.max_budget_residual = out.max_budget_residual.max(diag.budget_residual);
        out.max_continuity = out.max_continuity.max(diag.continuity);
        if !diag.bulk_converged {
            out.unconverged_bulk_steps += 1;
        }
        if let Some(k) = every_steps {
            if state.step % k == 0 && state.step != n_steps {
                out.snapshots.push(snap(&state));
            }
        }
    }
    out.snapshots.push(snap(&state));
    out.final_state = state;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flux_free(k: f64) -> SimulationConfig {
        let mut c = SimulationConfig::neutral(SchemeKind::Fv1, VerticalGrid::uniform(8, 80.0).unwrap());
        c.viscosity = Viscosity::Constant(k);
        c.bottom = BottomBoundary::ZeroFlux;
        c
    }

    #[test]
    fn inviscid_cells_follow_scalar_implicit_euler() {
        let mut c = flux_free(0.0);
        c.initial_wind = Complex64::new(3.0, -1.0);
        let col = Column::new(c.clone()).unwrap();
        let s0 = col.initial_state().unwrap();
        let (s1, _) = col.step(&s0).unwrap();
        let ifdt = Complex64::new(0.0, c.coriolis * c.dt);
        let expected = (c.initial_wind + ifdt * c.geostrophic_wind) / (Complex64::new(1.0, 0.0) + ifdt);
        for u in &s1.u {
            assert!((u - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn geostrophic_rest_state_is_fixed_point() {
        let c = flux_free(5.0);
        let col = Column::new(c.clone()).unwrap();
        let mut s = col.initial_state().unwrap();
        for _ in 0..10 {
            s = col.step(&s).unwrap().0;
        }
        for u in &s.u {
            assert!((u - c.geostrophic_wind).norm() < 1e-12);
        }
    }

    #[test]
    fn theta_profile_average_is_exact() {
        let p = ThetaProfile { value: 265.0, mixed_depth: 100.0, lapse_rate: 0.01 };
        assert_eq!(p.average(0.0, 50.0), 265.0);
        assert!((p.average(100.0, 300.0) - 266.0).abs() < 1e-12);
        // straddling the kink: int_80^120 = 265*40 + 0.01*20^2/2
        assert!((p.average(80.0, 120.0) - (265.0 * 40.0 + 2.0) / 40.0).abs() < 1e-12);
    }

    #[test]
    fn forcing_laws() {
        let Stratification::Stratified { surface, .. } = Stratification::stable() else { unreachable!() };
        assert!((surface.at(36_000.0) - 264.0).abs() < 1e-12);
        let Stratification::Stratified { surface, .. } = Stratification::unstable() else { unreachable!() };
        assert!((surface.at(0.0) - 279.0).abs() < 1e-12);
        assert!((surface.at(43_200.0) - 281.0).abs() < 1e-12);
        for k in 0..100 {
            let v = surface.at(k as f64 * 864.0);
            assert!((279.0 - 1e-12..=281.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn layout_of_each_scheme() {
        let g = VerticalGrid::uniform(10, 100.0).unwrap();
        let lay = |s: SchemeKind, d: Option<f64>| {
            let mut c = SimulationConfig::neutral(s, g.clone());
            c.delta_a = d;
            Layout::new(&c).unwrap()
        };
        let fd = lay(SchemeKind::Fd, None);
        assert!(!fd.compact && fd.delta_a == 5.0 && fd.interfaces[0] == 0.0);
        let fv1 = lay(SchemeKind::Fv1, None);
        assert!(fv1.compact && fv1.delta_a == 10.0 && fv1.interfaces.len() == 11);
        let fv2 = lay(SchemeKind::Fv2, None);
        assert_eq!(fv2.first_cell, 1);
        assert_eq!(fv2.interfaces[0], 10.0);
        assert_eq!(fv2.n_cells(), 9);
        let free = lay(SchemeKind::FvFree, None);
        assert_eq!((free.first_cell, free.interfaces[0], free.interfaces[1]), (0, 5.0, 10.0));
        let deep = lay(SchemeKind::FvFree, Some(15.0));
        assert_eq!((deep.first_cell, deep.interfaces[0], deep.interfaces[1]), (1, 15.0, 20.0));
    }

    #[test]
    fn surface_layer_too_deep_is_rejected() {
        let mut c = SimulationConfig::neutral(SchemeKind::FvFree, VerticalGrid::uniform(3, 30.0).unwrap());
        c.delta_a = Some(25.0);
        assert!(matches!(Column::new(c), Err(Error::Unsupported(_))));
    }
}
