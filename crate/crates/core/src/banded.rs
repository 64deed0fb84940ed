//! Banded LU with partial pivoting for the coupled mean/derivative system.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square matrix with `kl` sub- and `ku` super-diagonals. Each row keeps room
/// for `kl` extra columns of fill created by row interchanges.
#[derive(Debug, Clone)]
pub struct BandedMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandedMatrix { n, kl, ku, width, data: vec![T::zero(); n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width || j >= self.n {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.data[k])
    }

    /// Sets entry `(i, j)`; panics if it lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let k = self.slot(i, j).expect("in band");
        self.data[k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// `A x` using the declared band.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).fold(T::zero(), |acc, j| acc + self.get(i, j) * x[j])
            })
            .collect()
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    /// A pivot smaller than `1e-14` times the largest entry of its row is singular.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::Dimension(format!("rhs has {} entries, matrix {n}", rhs.len())));
        }
        let mut a = self.clone();
        let mut b = rhs.to_vec();
        let row_scale: Vec<f64> = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(n - 1);
                (lo..=hi).map(|j| self.get(i, j).modulus()).fold(0.0, f64::max)
            })
            .collect();
        let mut scale = row_scale.clone();
        let last_col = |k: usize| (k + self.ku + self.kl).min(n - 1);

        for k in 0..n {
            let rows_end = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).modulus();
            for r in k + 1..=rows_end {
                let v = a.get(r, k).modulus();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= 1e-14 * scale[p] || best == 0.0 || !best.is_finite() {
                return Err(Error::Singular { row: k, pivot: best });
            }
            if p != k {
                for j in k..=last_col(k) {
                    let (x, y) = (a.get(k, j), a.get(p, j));
                    a.put(k, j, y);
                    a.put(p, j, x);
                }
                b.swap(k, p);
                scale.swap(k, p);
            }
            let pivot = a.get(k, k);
            for r in k + 1..=rows_end {
                let ark = a.get(r, k);
                if ark == T::zero() {
                    continue;
                }
                let l = ark / pivot;
                a.put(r, k, T::zero());
                for j in k + 1..=last_col(k) {
                    let akj = a.get(k, j);
                    if akj != T::zero() {
                        let v = a.get(r, j) - l * akj;
                        a.put(r, j, v);
                    }
                }
                let bk = b[k];
                b[r] -= l * bk;
            }
        }
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut acc = b[k];
            for (j, xj) in x.iter().enumerate().take(last_col(k) + 1).skip(k + 1) {
                acc -= a.get(k, j) * *xj;
            }
            x[k] = acc / a.get(k, k);
        }
        Ok(x)
    }

    // Unchecked write used during elimination, where fill may reach kl columns
    // past the declared upper band.
    fn put(&mut self, i: usize, j: usize, v: T) {
        match self.slot(i, j) {
            Some(k) => self.data[k] = v,
            None => debug_assert!(v == T::zero(), "fill outside storage at ({i}, {j})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        // [0 1; 1 1] x = [1, 3] -> x = [2, 1]
        let mut a = BandedMatrix::<f64>::zeros(2, 1, 1);
        a.set(0, 1, 1.0);
        a.set(1, 0, 1.0);
        a.set(1, 1, 1.0);
        let x = a.solve(&[1.0, 3.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_is_reported() {
        let mut a = BandedMatrix::<f64>::zeros(3, 1, 1);
        a.set(0, 0, 1.0);
        a.set(1, 1, 0.0);
        a.set(2, 2, 1.0);
        assert!(matches!(a.solve(&[1.0, 1.0, 1.0]), Err(Error::Singular { row: 1, .. })));
    }

    #[test]
    fn pentadiagonal_complex_residual() {
        let n = 41;
        let mut a = BandedMatrix::<Complex64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..=(i + 2).min(n - 1) {
                let v = Complex64::new(((i * 7 + j * 3) % 5) as f64 - 2.0, ((i + j) % 3) as f64 * 0.3);
                a.set(i, j, v);
            }
        }
        let b: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let x = a.solve(&b).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).norm() < 1e-9 * (1.0 + bi.norm()), "{ri} vs {bi}");
        }
    }
}
