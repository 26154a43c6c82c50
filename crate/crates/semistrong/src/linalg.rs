//! Tridiagonal solvers and small dense helpers.

use std::ops::{Add, Div, Mul, Neg, Sub};

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + From<f64>
    + Send
    + Sync
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Tridiagonal matrix with `lower[i] = A[i+1][i]`, `upper[i] = A[i][i+1]`.
#[derive(Debug, Clone)]
pub struct Tridiagonal<T> {
    pub lower: Vec<T>,
    pub diag: Vec<T>,
    pub upper: Vec<T>,
}

/// Thomas factorisation, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu<T> {
    multipliers: Vec<T>,
    pivots: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Tridiagonal<T> {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s = s + self.lower[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s = s + self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    pub fn factor(&self) -> Result<TridiagonalLu<T>> {
        let n = self.len();
        let scale = self
            .diag
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .map(|v| v.modulus())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut pivots = Vec::with_capacity(n);
        let mut multipliers = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut d = self.diag[i];
            if i > 0 {
                let m = self.lower[i - 1] / pivots[i - 1];
                d = d - m * self.upper[i - 1];
                multipliers.push(m);
            }
            if d.modulus() <= 1e-14 * scale {
                return Err(Error::SingularSystem {
                    row: i,
                    pivot: d.modulus(),
                });
            }
            pivots.push(d);
        }
        Ok(TridiagonalLu {
            multipliers,
            pivots,
            upper: self.upper.clone(),
        })
    }

    pub fn solve(&self, rhs: &mut [T]) -> Result<()> {
        self.factor()?.solve_in_place(rhs);
        Ok(())
    }
}

impl<T: Scalar> TridiagonalLu<T> {
    pub fn solve_in_place(&self, rhs: &mut [T]) {
        let n = self.pivots.len();
        debug_assert_eq!(rhs.len(), n);
        for i in 1..n {
            rhs[i] = rhs[i] - self.multipliers[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] = rhs[n - 1] / self.pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.pivots[i];
        }
    }

    /// Smallest pivot magnitude, a cheap conditioning indicator.
    pub fn min_pivot(&self) -> f64 {
        self.pivots.iter().map(|p| p.modulus()).fold(f64::INFINITY, f64::min)
    }
}

/// Number of eigenvalues of a symmetric tridiagonal matrix strictly below `x`
/// (Sturm sequence count).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let prev = if q == 0.0 { f64::EPSILON * off[i - 1].abs().max(1.0) } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest `count` eigenvalues of a symmetric tridiagonal matrix, descending, by bisection.
pub fn symmetric_tridiagonal_top(diag: &[f64], off: &[f64], count: usize) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    (0..count.min(n))
        .map(|k| {
            // eigenvalue with exactly n-1-k eigenvalues below it
            let target = n - 1 - k;
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if sturm_count(diag, off, mid) > target {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

pub(crate) fn mat_from_rows(n: usize, entries: &[Complex64]) -> Mat<Complex64> {
    Mat::from_fn(n, n, |i, j| entries[i * n + j])
}

/// Determinant by LU with partial pivoting.
pub fn determinant(n: usize, entries: &[Complex64]) -> Complex64 {
    mat_from_rows(n, entries).determinant()
}

/// Spectral norm of the inverse, `1 / sigma_min`.
pub fn inverse_norm2(n: usize, entries: &[Complex64]) -> Result<f64> {
    let sv = mat_from_rows(n, entries)
        .singular_values()
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(1.0 / smin)
}

/// Solves the dense real system `a x = b` (row-major `a`).
pub fn solve_dense(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    use faer::linalg::solvers::Solve;
    let m = Mat::from_fn(n, n, |i, j| a[i * n + j]);
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let x = m.partial_piv_lu().solve(&rhs);
    (0..n).map(|i| x[(i, 0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_apply() {
        let n = 9;
        let t = Tridiagonal {
            lower: (0..n - 1).map(|i| 0.3 + i as f64 * 0.1).collect(),
            diag: (0..n).map(|i| 4.0 + i as f64).collect(),
            upper: (0..n - 1).map(|i| -0.7 + i as f64 * 0.05).collect(),
        };
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut b = t.apply(&x);
        t.solve(&mut b).unwrap();
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_thomas() {
        let n = 6;
        let z = Complex64::new(0.5, 1.5);
        let t = Tridiagonal {
            lower: vec![Complex64::from(1.0); n - 1],
            diag: vec![Complex64::from(-2.0) - z; n],
            upper: vec![Complex64::from(1.0); n - 1],
        };
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let mut b = t.apply(&x);
        t.solve(&mut b).unwrap();
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).norm() < 1e-12);
        }
    }

    #[test]
    fn bisection_matches_laplacian_spectrum() {
        let n = 50;
        let diag = vec![-2.0; n];
        let off = vec![1.0; n - 1];
        let top = symmetric_tridiagonal_top(&diag, &off, 3);
        for (k, ev) in top.iter().enumerate() {
            let exact = -2.0 + 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((ev - exact).abs() < 1e-12, "{ev} vs {exact}");
        }
    }

    #[test]
    fn singular_detected() {
        let t = Tridiagonal {
            lower: vec![1.0],
            diag: vec![1.0, 1.0],
            upper: vec![1.0],
        };
        assert!(t.factor().is_err());
    }
}
