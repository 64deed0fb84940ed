//! One-equation turbulent kinetic energy closure.
//!
//! TKE `e` lives at cell centers of the resolved column. Eddy coefficients are
//! formed per cell as `c_k l_m sqrt(e)` and averaged onto interior interfaces;
//! the bottom interface is owned by the surface layer.
//!
//! ```text
//! d_t e = d_z(K_e d_z e) + K_u S^2 - K_theta N^2 - c_eps e^{3/2} / l_eps
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::{solve_tridiagonal, TridiagonalSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TkeConstants {
    pub c_k: f64,
    pub c_eps: f64,
    /// Sets the surface TKE `u_*^2 / c_mu`.
    pub c_mu: f64,
    pub e_min: f64,
    /// Asymptotic mixing length, m.
    pub l_inf: f64,
    /// Multiplier of `kappa (z + z_r)` in the near-wall mixing length.
    pub wall_length_factor: f64,
    /// TKE diffusivity as a multiple of `K_u`.
    pub transport_factor: f64,
    /// Slope of the turbulent Prandtl number in the gradient Richardson number.
    pub prandtl_slope: f64,
    pub prandtl_max: f64,
}

impl Default for TkeConstants {
    fn default() -> Self {
        TkeConstants {
            c_k: 0.1,
            c_eps: 0.7,
            c_mu: 0.09,
            e_min: 1e-6,
            l_inf: 100.0,
            wall_length_factor: 1.0,
            transport_factor: 1.0,
            prandtl_slope: 4.0,
            prandtl_max: 10.0,
        }
    }
}

impl TkeConstants {
    /// Same `c_k`, `c_eps` with the wall length and surface TKE chosen so that a
    /// neutral production-dissipation balance gives `K_u = kappa u_* (z + z_r)`
    /// and `e = u_*^2 / sqrt(c_k c_eps)` in the log layer.
    pub fn log_layer_consistent(self) -> Self {
        TkeConstants {
            wall_length_factor: (self.c_eps / (self.c_k * self.c_k * self.c_k)).powf(0.25),
            c_mu: (self.c_k * self.c_eps).sqrt(),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_k", self.c_k),
            ("c_eps", self.c_eps),
            ("c_mu", self.c_mu),
            ("e_min", self.e_min),
            ("l_inf", self.l_inf),
            ("wall_length_factor", self.wall_length_factor),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("closure {name} must be positive, got {v}")));
            }
        }
        if !(self.transport_factor >= 0.0) || !(self.prandtl_slope >= 0.0) || !(self.prandtl_max >= 1.0) {
            return Err(Error::Parameter("invalid transport or Prandtl constants".into()));
        }
        Ok(())
    }

    /// TKE at the top of the surface layer.
    pub fn surface_tke(&self, u_star: f64) -> f64 {
        (u_star * u_star / self.c_mu).max(self.e_min)
    }

    /// Turbulent Prandtl number for gradient Richardson number `ri`.
    pub fn prandtl(&self, ri: f64) -> f64 {
        (1.0 + self.prandtl_slope * ri.max(0.0)).min(self.prandtl_max)
    }
}

/// Mesh of the resolved column seen by the closure.
#[derive(Debug, Clone, Copy)]
pub struct TkeMesh<'a> {
    /// Interface heights above ground of the resolved cells.
    pub interfaces: &'a [f64],
    pub roughness: f64,
    pub kappa: f64,
}

impl TkeMesh<'_> {
    pub fn n_cells(&self) -> usize {
        self.interfaces.len() - 1
    }

    fn size(&self, j: usize) -> f64 {
        self.interfaces[j + 1] - self.interfaces[j]
    }

    fn center(&self, j: usize) -> f64 {
        0.5 * (self.interfaces[j] + self.interfaces[j + 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TkeState {
    /// Per-cell TKE, m^2/s^2.
    pub e: Vec<f64>,
    pub l_m: Vec<f64>,
    pub l_eps: Vec<f64>,
    /// Per-interface eddy viscosity, m^2/s.
    pub k_u: Vec<f64>,
    /// Per-interface eddy diffusivity for heat, m^2/s.
    pub k_theta: Vec<f64>,
}

/// Boundary condition for TKE at the bottom of the resolved column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TkeBottom {
    /// TKE prescribed at the bottom interface.
    Value(f64),
    ZeroFlux,
}

/// Mixing and dissipation lengths at cell centers.
///
/// `1/l = 1/(f kappa (z + z_r)) + 1/l_inf` with the wall factor `f`, capped by
/// `sqrt(2e)/N` in stable stratification.
pub fn mixing_length(mesh: &TkeMesh<'_>, e: &[f64], n2_cells: &[f64], c: &TkeConstants) -> (Vec<f64>, Vec<f64>) {
    let f = c.wall_length_factor;
    let l_m: Vec<f64> = (0..mesh.n_cells())
        .map(|j| {
            let wall = f * mesh.kappa * (mesh.center(j) + mesh.roughness);
            let mut l = 1.0 / (1.0 / wall + 1.0 / c.l_inf);
            if n2_cells[j] > 0.0 {
                l = l.min((2.0 * e[j]).sqrt() / n2_cells[j].sqrt());
            }
            l
        })
        .collect();
    let l_eps = l_m.clone();
    (l_m, l_eps)
}

/// Interface values averaged onto cells.
pub fn interface_to_cells(v: &[f64]) -> Vec<f64> {
    v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Eddy viscosity and diffusivity at interfaces. The bottom entries are left
/// for the caller to overwrite with surface-layer values.
pub fn eddy_diffusivities(state: &TkeState, shear2: &[f64], n2: &[f64], c: &TkeConstants) -> (Vec<f64>, Vec<f64>) {
    let n = state.e.len();
    let cell: Vec<f64> = (0..n).map(|j| c.c_k * state.l_m[j] * state.e[j].sqrt()).collect();
    let mut k_u = vec![0.0; n + 1];
    k_u[0] = cell[0];
    for m in 1..n {
        k_u[m] = 0.5 * (cell[m - 1] + cell[m]);
    }
    k_u[n] = cell[n - 1];
    let k_theta = k_u
        .iter()
        .enumerate()
        .map(|(m, k)| {
            let ri = n2[m] / shear2[m].max(1e-12);
            k / c.prandtl(ri)
        })
        .collect();
    (k_u, k_theta)
}

/// Fresh state at `e_min` with coefficients computed for a resting column.
pub fn initial_tke(mesh: &TkeMesh<'_>, e0: f64, c: &TkeConstants) -> TkeState {
    let n = mesh.n_cells();
    let e = vec![e0.max(c.e_min); n];
    let (l_m, l_eps) = mixing_length(mesh, &e, &vec![0.0; n], c);
    let mut st = TkeState { e, l_m, l_eps, k_u: vec![0.0; n + 1], k_theta: vec![0.0; n + 1] };
    let (k_u, k_theta) = eddy_diffusivities(&st, &vec![0.0; n + 1], &vec![0.0; n + 1], c);
    st.k_u = k_u;
    st.k_theta = k_theta;
    st
}

/// Per-cell source terms `(shear production, buoyancy sink)` from interface values.
pub fn cell_sources(state: &TkeState, shear2: &[f64], n2: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p: Vec<f64> = shear2.iter().zip(&state.k_u).map(|(s, k)| k * s).collect();
    let b: Vec<f64> = n2.iter().zip(&state.k_theta).map(|(n, k)| k * n).collect();
    (interface_to_cells(&p), interface_to_cells(&b))
}

/// Options that tests use to isolate parts of the TKE update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TkeStepOptions {
    pub clip: bool,
}

impl Default for TkeStepOptions {
    fn default() -> Self {
        TkeStepOptions { clip: true }
    }
}

/// Advances TKE by one step. Transport and dissipation are implicit, the
/// dissipation linearized as `c_eps sqrt(e^n) e^{n+1} / l_eps`; production and
/// buoyancy are explicit. Lengths and coefficients are refreshed from the new TKE.
#[allow(clippy::too_many_arguments)]
pub fn step_tke(
    state: &TkeState,
    shear2: &[f64],
    n2: &[f64],
    dt: f64,
    mesh: &TkeMesh<'_>,
    bottom: TkeBottom,
    c: &TkeConstants,
    opts: TkeStepOptions,
) -> Result<TkeState> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let n = mesh.n_cells();
    if state.e.len() != n || shear2.len() != n + 1 || n2.len() != n + 1 {
        return Err(Error::Dimension(format!(
            "tke: {} cells, e {}, shear2 {}, n2 {}",
            n,
            state.e.len(),
            shear2.len(),
            n2.len()
        )));
    }
    let (prod, buoy) = cell_sources(state, shear2, n2);
    let mut sys = TridiagonalSystem { sub: vec![0.0; n], main: vec![0.0; n], sup: vec![0.0; n], rhs: vec![0.0; n] };
    for j in 0..n {
        let h = mesh.size(j);
        sys.main[j] = 1.0 + dt * c.c_eps * state.e[j].sqrt() / state.l_eps[j];
        sys.rhs[j] = state.e[j] + dt * (prod[j] - buoy[j]);
        if j + 1 < n {
            let g = dt * c.transport_factor * state.k_u[j + 1] / (mesh.center(j + 1) - mesh.center(j)) / h;
            sys.main[j] += g;
            sys.sup[j] = -g;
        }
        if j > 0 {
            let g = dt * c.transport_factor * state.k_u[j] / (mesh.center(j) - mesh.center(j - 1)) / h;
            sys.main[j] += g;
            sys.sub[j] = -g;
        }
    }
    if let TkeBottom::Value(e_s) = bottom {
        let g = dt * c.transport_factor * state.k_u[0] / (mesh.center(0) - mesh.interfaces[0]) / mesh.size(0);
        sys.main[0] += g;
        sys.rhs[0] += g * e_s;
    }
    let mut e = solve_tridiagonal(&sys)?;
    if opts.clip {
        for v in &mut e {
            *v = v.max(c.e_min);
        }
    }
    let n2_cells = interface_to_cells(n2);
    let (l_m, l_eps) = mixing_length(mesh, &e, &n2_cells, c);
    let mut next = TkeState { e, l_m, l_eps, k_u: vec![0.0; n + 1], k_theta: vec![0.0; n + 1] };
    let (k_u, k_theta) = eddy_diffusivities(&next, shear2, n2, c);
    next.k_u = k_u;
    next.k_theta = k_theta;
    Ok(next)
}
