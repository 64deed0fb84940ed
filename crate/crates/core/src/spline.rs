//! Quadratic-spline finite-volume reconstruction.
//!
//! Inside a cell of size `h` the field is the quadratic
//!
//! ```text
//! S(xi) = mean + (phi_R + phi_L)/2 * xi + (phi_R - phi_L)/(2h) * (xi^2 - h^2/12)
//! ```
//!
//! in the offset `xi` from the cell center. Its average over the cell is `mean`
//! and its derivative at the edges is `phi_L`, `phi_R`. Requiring the value to be
//! continuous across interior interfaces gives the compact relation
//!
//! ```text
//! h_{m-1}/6 phi_{m-1} + (h_{m-1} + h_m)/3 phi_m + h_m/6 phi_{m+1} = mean_m - mean_{m-1}
//! ```
//!
//! which is second-order accurate for the first derivative.

use crate::error::{Error, Result};
use crate::grid::VerticalGrid;
use crate::scalar::Scalar;

/// One linear row closing the compact system at a boundary.
///
/// The row reads `phi_edge * phi_b + mean * u_b + phi_inner * phi_i = rhs`, where
/// `phi_b` is the derivative at the boundary interface, `u_b` the mean of the
/// adjacent cell and `phi_i` the derivative at the other interface of that cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryRow<T> {
    pub phi_edge: T,
    pub mean: T,
    pub phi_inner: T,
    pub rhs: T,
}

impl<T: Scalar> BoundaryRow<T> {
    /// `phi_b = value`.
    pub fn derivative(value: T) -> Self {
        BoundaryRow { phi_edge: T::from_real(1.0), mean: T::zero(), phi_inner: T::zero(), rhs: value }
    }

    /// `flux_coeff * phi_b = flux`.
    pub fn flux(flux_coeff: f64, flux: T) -> Self {
        BoundaryRow { phi_edge: T::from_real(flux_coeff), mean: T::zero(), phi_inner: T::zero(), rhs: flux }
    }

    /// The spline value at the boundary interface of a cell of size `h` equals `value`.
    ///
    /// At the lower edge `S(-h/2) = mean - h/3 phi_b - h/6 phi_i`; the upper edge
    /// mirrors the signs.
    pub fn edge_value(h: f64, value: T, at_bottom: bool) -> Self {
        let s = if at_bottom { -1.0 } else { 1.0 };
        BoundaryRow {
            phi_edge: T::from_real(s * h / 3.0),
            mean: T::from_real(1.0),
            phi_inner: T::from_real(s * h / 6.0),
            rhs: value,
        }
    }

    /// Every coefficient and the right-hand side multiplied by `k`.
    pub fn scaled(self, k: f64) -> Self {
        BoundaryRow {
            phi_edge: self.phi_edge * k,
            mean: self.mean * k,
            phi_inner: self.phi_inner * k,
            rhs: self.rhs * k,
        }
    }
}

/// Tridiagonal system `sub[i] x[i-1] + main[i] x[i] + sup[i] x[i+1] = rhs[i]`.
/// `sub[0]` and `sup[n-1]` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem<T> {
    pub sub: Vec<T>,
    pub main: Vec<T>,
    pub sup: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Scalar> TridiagonalSystem<T> {
    pub fn len(&self) -> usize {
        self.main.len()
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.main.len();
        if n == 0 || self.sub.len() != n || self.sup.len() != n || self.rhs.len() != n {
            return Err(Error::Dimension(format!(
                "tridiagonal: sub {}, main {}, sup {}, rhs {}",
                self.sub.len(),
                n,
                self.sup.len(),
                self.rhs.len()
            )));
        }
        Ok(())
    }

    /// Residual `A x - rhs`.
    pub fn residual(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut r = self.main[i] * x[i] - self.rhs[i];
                if i > 0 {
                    r += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    r += self.sup[i] * x[i + 1];
                }
                r
            })
            .collect()
    }
}

/// Thomas elimination. A pivot below `1e-14` times the magnitude of its
/// original row is reported as singular.
pub fn solve_tridiagonal<T: Scalar>(system: &TridiagonalSystem<T>) -> Result<Vec<T>> {
    system.check()?;
    let n = system.len();
    let row_scale = |i: usize| {
        let mut s = system.main[i].modulus();
        if i > 0 {
            s = s.max(system.sub[i].modulus());
        }
        if i + 1 < n {
            s = s.max(system.sup[i].modulus());
        }
        s
    };
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut pivot = system.main[0];
    for i in 0..n {
        if i > 0 {
            pivot = system.main[i] - system.sub[i] * c[i - 1];
        }
        let p = pivot.modulus();
        if !(p > 1e-14 * row_scale(i)) {
            return Err(Error::Singular { row: i, pivot: p });
        }
        if i + 1 < n {
            c[i] = system.sup[i] / pivot;
        }
        d[i] = if i == 0 { system.rhs[0] / pivot } else { (system.rhs[i] - system.sub[i] * d[i - 1]) / pivot };
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    Ok(x)
}

/// Compact system for the interface derivatives of `means` on the cells
/// delimited by `interfaces` (which need not start at the ground).
pub fn assemble_compact_on<T: Scalar>(
    interfaces: &[f64],
    means: &[T],
    bottom: BoundaryRow<T>,
    top: BoundaryRow<T>,
) -> Result<TridiagonalSystem<T>> {
    if interfaces.len() < 2 || means.len() + 1 != interfaces.len() {
        return Err(Error::Dimension(format!("{} cell values for {} interfaces", means.len(), interfaces.len())));
    }
    let n_cells = means.len();
    let n = n_cells + 1;
    let h: Vec<f64> = interfaces.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sys = TridiagonalSystem {
        sub: vec![T::zero(); n],
        main: vec![T::zero(); n],
        sup: vec![T::zero(); n],
        rhs: vec![T::zero(); n],
    };
    sys.main[0] = bottom.phi_edge;
    sys.sup[0] = bottom.phi_inner;
    sys.rhs[0] = bottom.rhs - bottom.mean * means[0];
    for m in 1..n_cells {
        sys.sub[m] = T::from_real(h[m - 1] / 6.0);
        sys.main[m] = T::from_real((h[m - 1] + h[m]) / 3.0);
        sys.sup[m] = T::from_real(h[m] / 6.0);
        sys.rhs[m] = means[m] - means[m - 1];
    }
    sys.main[n - 1] = top.phi_edge;
    sys.sub[n - 1] = top.phi_inner;
    sys.rhs[n - 1] = top.rhs - top.mean * means[n_cells - 1];
    Ok(sys)
}

/// Compact system on a full grid.
pub fn assemble_compact_system<T: Scalar>(
    grid: &VerticalGrid,
    means: &[T],
    bottom: BoundaryRow<T>,
    top: BoundaryRow<T>,
) -> Result<TridiagonalSystem<T>> {
    assemble_compact_on(grid.interfaces(), means, bottom, top)
}

/// Interface derivatives reconstructed from cell means.
pub fn interface_derivatives<T: Scalar>(
    grid: &VerticalGrid,
    means: &[T],
    bottom: BoundaryRow<T>,
    top: BoundaryRow<T>,
) -> Result<Vec<T>> {
    solve_tridiagonal(&assemble_compact_system(grid, means, bottom, top)?)
}

/// Quadratic reconstruction inside one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpline<T> {
    pub mean: T,
    pub phi_left: T,
    pub phi_right: T,
    pub h: f64,
    pub center: f64,
}

impl<T: Scalar> CellSpline<T> {
    pub fn new(mean: T, h: f64, phi_left: T, phi_right: T, center: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Parameter(format!("cell size must be positive, got {h}")));
        }
        Ok(CellSpline { mean, phi_left, phi_right, h, center })
    }

    /// Value at offset `xi` from the center, without a domain check.
    pub fn at_offset(&self, xi: f64) -> T {
        let h = self.h;
        self.mean
            + (self.phi_right + self.phi_left) * (0.5 * xi)
            + (self.phi_right - self.phi_left) * ((xi * xi - h * h / 12.0) / (2.0 * h))
    }

    pub fn derivative_at_offset(&self, xi: f64) -> T {
        (self.phi_right + self.phi_left) * 0.5 + (self.phi_right - self.phi_left) * (xi / self.h)
    }

    pub fn lower(&self) -> f64 {
        self.center - 0.5 * self.h
    }

    pub fn upper(&self) -> f64 {
        self.center + 0.5 * self.h
    }

    /// Value at height `z`, which must lie in the closed cell.
    pub fn evaluate(&self, z: f64) -> Result<T> {
        let tol = 1e-12 * self.upper().abs().max(1.0);
        if !(z >= self.lower() - tol && z <= self.upper() + tol) {
            return Err(Error::OutOfDomain { z, lo: self.lower(), hi: self.upper() });
        }
        Ok(self.at_offset(z - self.center))
    }

    pub fn value_at_lower(&self) -> T {
        self.mean - self.phi_left * (self.h / 3.0) - self.phi_right * (self.h / 6.0)
    }

    pub fn value_at_upper(&self) -> T {
        self.mean + self.phi_right * (self.h / 3.0) + self.phi_left * (self.h / 6.0)
    }

    /// Exact integral of the spline between two heights inside the cell.
    pub fn integral(&self, z_lo: f64, z_hi: f64) -> T {
        let h = self.h;
        let a = self.mean - (self.phi_right - self.phi_left) * (h / 24.0);
        let b = (self.phi_right + self.phi_left) * 0.5;
        let c = (self.phi_right - self.phi_left) / (2.0 * h);
        let prim = |xi: f64| a * xi + b * (0.5 * xi * xi) + c * (xi * xi * xi / 3.0);
        prim(z_hi - self.center) - prim(z_lo - self.center)
    }
}

pub fn spline_from_cell<T: Scalar>(mean: T, h: f64, phi_left: T, phi_right: T, center: f64) -> Result<CellSpline<T>> {
    CellSpline::new(mean, h, phi_left, phi_right, center)
}

/// Spline on the sub-cell `(delta_a, z_1)` of the first cell.
///
/// `first_cell_mean` is the average over the whole first cell and
/// `sl_average` the average of the surface-layer profile over `(0, delta_a)`;
/// the sub-cell mean removes the surface-layer share from the cell total.
pub fn first_cell_subsplit<T: Scalar>(
    grid: &VerticalGrid,
    delta_a: f64,
    first_cell_mean: T,
    phi_delta: T,
    phi_1: T,
    sl_average: T,
) -> Result<CellSpline<T>> {
    let z1 = grid.interfaces()[1];
    if !(delta_a >= 0.0) {
        return Err(Error::Parameter(format!("surface-layer height must be non-negative, got {delta_a}")));
    }
    if delta_a >= z1 {
        return Err(Error::Unsupported(format!("surface layer height {delta_a} m reaches the first interface {z1} m")));
    }
    let h_sub = z1 - delta_a;
    let mean = (first_cell_mean * grid.cell_sizes()[0] - sl_average * delta_a) / h_sub;
    CellSpline::new(mean, h_sub, phi_delta, phi_1, 0.5 * (z1 + delta_a))
}
