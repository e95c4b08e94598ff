//! Preconditioned conjugate gradients and a small dense Cholesky factorization.

use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            rel_tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive (semi-)definite `A`, starting from the given `x`.
///
/// `apply(x, y)` must overwrite `y` with `A x`; `precond(r, z)` overwrites `z` with `M^{-1} r`.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: CgOptions,
) -> Result<CgReport> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bnorm;
    for it in 0..opts.max_iter {
        if res <= opts.rel_tol {
            return Ok(CgReport {
                iterations: it,
                residual: res,
            });
        }
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::SolverStalled {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = norm(&r) / bnorm;
        if !res.is_finite() {
            return Err(Error::NonFinite("conjugate gradient residual"));
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if res <= opts.rel_tol {
        return Ok(CgReport {
            iterations: opts.max_iter,
            residual: res,
        });
    }
    Err(Error::SolverStalled {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Lower-triangular Cholesky factor of a dense symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    /// Row-major lower triangle, full `n * n` storage.
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: a.len(),
            });
        }
        let mut l = vec![0.0; n * n];
        // L keeps the leading zeros of each row of A
        let first: Vec<usize> = (0..n).map(|i| (0..i).find(|&j| a[i * n + j] != 0.0).unwrap_or(i)).collect();
        for i in 0..n {
            for j in 0..=i {
                if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 * (a[i * n + j].abs() + a[j * n + i].abs()) {
                    return Err(Error::SingularCovariance);
                }
                let mut s = a[i * n + j];
                for k in first[i].max(first[j])..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::SingularCovariance);
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L y = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }

    /// `L x`.
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * x[k]).sum())
            .collect()
    }
}
