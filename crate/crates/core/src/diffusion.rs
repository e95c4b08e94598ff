//! Q1 Galerkin discretization of `-∇·(K ∇u) = b` on a [`Grid`], matrix-free.
//!
//! The unknowns are nodal values. On the box the boundary nodes are fixed to zero; on the
//! torus the solution is the mean-zero representative. CG is preconditioned by the
//! hierarchical basis of the grid (hats on the box, periodic wavelets on the torus) with a
//! diagonal scaling in basis coordinates.

use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{pcg, CgOptions, CgReport};
use crate::mesh::{unflatten, ElementQuadrature, Grid};
use crate::wavelet::{transform_nd, Basis1d, BasisKind, Normalization};

#[derive(Debug, Clone)]
pub struct Diffusion {
    grid: Grid,
    quad: ElementQuadrature,
    elems: Vec<usize>,
    /// Conductivity tensor times quadrature weight and cell volume, `d * d` per point.
    kw: Vec<f64>,
    basis: Basis1d,
    /// Inverse diagonal in basis coordinates, zero on excluded functions.
    diag: Vec<f64>,
}

impl Diffusion {
    /// Two Gauss points per axis and element.
    pub fn quadrature(dim: usize) -> ElementQuadrature {
        ElementQuadrature::gauss(dim, 2)
    }

    /// Scalar conductivity given at the points of [`Diffusion::quadrature`], element-major.
    pub fn scalar(grid: Grid, values: &[f64]) -> Result<Self> {
        let d = grid.dim;
        let mut tensors = vec![0.0; values.len() * d * d];
        for (t, &v) in tensors.chunks_mut(d * d).zip(values) {
            for k in 0..d {
                t[k * d + k] = v;
            }
        }
        Self::tensor(grid, &tensors)
    }

    /// Symmetric conductivity tensors (`d * d` row-major entries per quadrature point).
    pub fn tensor(grid: Grid, tensors: &[f64]) -> Result<Self> {
        let d = grid.dim;
        let quad = Self::quadrature(d);
        let nq = quad.len();
        let expected = grid.n_elements() * nq * d * d;
        if tensors.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: tensors.len(),
            });
        }
        let vol = grid.h().powi(d as i32);
        let mut kw = tensors.to_vec();
        let mut trace_sum = 0.0;
        let mut min_diag = f64::INFINITY;
        for (p, t) in kw.chunks_mut(d * d).enumerate() {
            for k in 0..d {
                min_diag = min_diag.min(t[k * d + k]);
                trace_sum += t[k * d + k] / d as f64;
            }
            let w = vol * quad.rule.weights[p % nq];
            t.iter_mut().for_each(|v| *v *= w);
        }
        if !trace_sum.is_finite() {
            return Err(Error::NonFinite("conductivity"));
        }
        if min_diag <= 0.0 {
            return Err(Error::NotCoercive { min: min_diag });
        }
        let mean_k = trace_sum / (grid.n_elements() * nq) as f64;

        let basis = if grid.periodic {
            Basis1d::new(BasisKind::Periodic, grid.level, Normalization::H1)
        } else {
            Basis1d::new(BasisKind::Hat, grid.level, Normalization::L2)
        };
        let (l2, h1) = basis.norms();
        let nn = grid.nodes_per_axis();
        let mut diag = vec![0.0; grid.n_nodes()];
        let mut idx = [0usize; 3];
        for (i, v) in diag.iter_mut().enumerate() {
            unflatten(i, nn, d, &mut idx);
            let excluded = if grid.periodic {
                idx[..d].iter().all(|&k| k == 0)
            } else {
                idx[..d].iter().any(|&k| k == 0 || k == nn - 1)
            };
            if !excluded {
                let mut e = 0.0;
                for k in 0..d {
                    let mut t = h1[idx[k]];
                    for m in 0..d {
                        if m != k {
                            t *= l2[idx[m]];
                        }
                    }
                    e += t;
                }
                *v = 1.0 / (mean_k * e);
            }
        }
        Ok(Diffusion {
            elems: grid.element_nodes(),
            grid,
            quad,
            kw,
            basis,
            diag,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `r = K u` with the nodal stiffness matrix (no boundary treatment).
    pub fn apply(&self, u: &[f64], r: &mut [f64]) {
        let d = self.grid.dim;
        let corners = self.quad.corners();
        let nq = self.quad.len();
        let inv_h = 1.0 / self.grid.h();
        r.iter_mut().for_each(|v| *v = 0.0);
        let mut vals = [0.0; 8];
        let mut g = [0.0; 3];
        let mut flux = [0.0; 3];
        for e in 0..self.grid.n_elements() {
            let nodes = &self.elems[e * corners..(e + 1) * corners];
            for c in 0..corners {
                vals[c] = u[nodes[c]];
            }
            for q in 0..nq {
                let gr = &self.quad.grad[q * corners * d..(q + 1) * corners * d];
                g[..d].iter_mut().for_each(|v| *v = 0.0);
                for c in 0..corners {
                    for k in 0..d {
                        g[k] += gr[c * d + k] * vals[c];
                    }
                }
                let t = &self.kw[(e * nq + q) * d * d..(e * nq + q + 1) * d * d];
                for k in 0..d {
                    flux[k] = (0..d).map(|m| t[k * d + m] * g[m]).sum::<f64>() * inv_h * inv_h;
                }
                for c in 0..corners {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += gr[c * d + k] * flux[k];
                    }
                    r[nodes[c]] += s;
                }
            }
        }
    }

    /// `r_i = -∫ K e_l · ∇φ_i`, the load of the cell problem in direction `l`.
    pub fn cell_load(&self, l: usize) -> Vec<f64> {
        let d = self.grid.dim;
        let corners = self.quad.corners();
        let nq = self.quad.len();
        let inv_h = 1.0 / self.grid.h();
        let mut r = vec![0.0; self.grid.n_nodes()];
        for e in 0..self.grid.n_elements() {
            let nodes = &self.elems[e * corners..(e + 1) * corners];
            for q in 0..nq {
                let gr = &self.quad.grad[q * corners * d..(q + 1) * corners * d];
                let t = &self.kw[(e * nq + q) * d * d..(e * nq + q + 1) * d * d];
                for c in 0..corners {
                    let mut s = 0.0;
                    for k in 0..d {
                        s += gr[c * d + k] * t[k * d + l];
                    }
                    r[nodes[c]] -= s * inv_h;
                }
            }
        }
        r
    }

    /// `∫ (e_k + ∇v_k) · K (e_l + ∇v_l)` for all `k, l`, where `v_k = fields[k]` (nodal).
    /// The result is symmetric by construction.
    pub fn corrected_energy(&self, fields: &[&[f64]]) -> Vec<f64> {
        let d = self.grid.dim;
        assert_eq!(fields.len(), d);
        let corners = self.quad.corners();
        let nq = self.quad.len();
        let inv_h = 1.0 / self.grid.h();
        let mut out = vec![0.0; d * d];
        let mut v = [[0.0; 3]; 3];
        for e in 0..self.grid.n_elements() {
            let nodes = &self.elems[e * corners..(e + 1) * corners];
            for q in 0..nq {
                let gr = &self.quad.grad[q * corners * d..(q + 1) * corners * d];
                for (k, f) in fields.iter().enumerate() {
                    for m in 0..d {
                        let mut g = 0.0;
                        for c in 0..corners {
                            g += gr[c * d + m] * f[nodes[c]];
                        }
                        v[k][m] = g * inv_h + if m == k { 1.0 } else { 0.0 };
                    }
                }
                let t = &self.kw[(e * nq + q) * d * d..(e * nq + q + 1) * d * d];
                for k in 0..d {
                    for l in k..d {
                        let mut s = 0.0;
                        for a in 0..d {
                            for b in 0..d {
                                s += v[k][a] * t[a * d + b] * v[l][b];
                            }
                        }
                        out[k * d + l] += s;
                    }
                }
            }
        }
        for k in 0..d {
            for l in 0..k {
                out[k * d + l] = out[l * d + k];
            }
        }
        out
    }

    fn constrain(&self, r: &mut [f64]) {
        if self.grid.periodic {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter_mut().for_each(|v| *v -= mean);
        } else {
            for (i, v) in r.iter_mut().enumerate() {
                if self.grid.is_boundary(i) {
                    *v = 0.0;
                }
            }
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let d = self.grid.dim;
        let bases = vec![&self.basis; d];
        z.copy_from_slice(r);
        transform_nd(z, &bases, true);
        for (v, s) in z.iter_mut().zip(&self.diag) {
            *v *= s;
        }
        transform_nd(z, &bases, false);
    }

    /// Solves the constrained system for a nodal load `b`.
    ///
    /// On the torus the load is projected onto mean-zero vectors and the solution has nodal
    /// mean zero; on the box boundary rows are dropped and boundary values are zero.
    pub fn solve(&self, b: &[f64], opts: CgOptions) -> Result<(Vec<f64>, CgReport)> {
        let n = self.grid.n_nodes();
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite load vector"));
        }
        let mut rhs = b.to_vec();
        self.constrain(&mut rhs);
        let mut x = vec![0.0; n];
        let report = pcg(
            |u, y| {
                self.apply(u, y);
                self.constrain(y);
            },
            |r, z| self.precondition(r, z),
            &rhs,
            &mut x,
            opts,
        )?;
        if self.grid.periodic {
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
        }
        Ok((x, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_on_the_interval() {
        let g = Grid::boxed(1, 5);
        let q = Diffusion::quadrature(1);
        let op = Diffusion::scalar(g, &vec![1.0; g.n_elements() * q.len()]).unwrap();
        let h = g.h();
        let b: Vec<f64> = (0..g.n_nodes()).map(|_| h).collect();
        let (u, _) = op.solve(&b, CgOptions::default()).unwrap();
        // 1D linear elements are nodally exact for constant coefficients
        for (i, v) in u.iter().enumerate() {
            let x = i as f64 * h;
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn torus_solution_has_zero_mean() {
        let g = Grid::torus(2, 4);
        let q = Diffusion::quadrature(2);
        let pts = g.quadrature_points(&q);
        let k: Vec<f64> = pts
            .chunks(2)
            .map(|p| 3.0 + (core::f64::consts::TAU * p[0]).sin() * (core::f64::consts::TAU * p[1]).cos())
            .collect();
        let op = Diffusion::scalar(g, &k).unwrap();
        let b = op.cell_load(0);
        assert!(b.iter().sum::<f64>().abs() < 1e-12);
        let (w, rep) = op.solve(&b, CgOptions::default()).unwrap();
        assert!(rep.residual <= 1e-10);
        assert!(w.iter().sum::<f64>().abs() < 1e-10);
        let a = op.corrected_energy(&[&w, &vec![0.0; w.len()]]);
        assert_eq!(a[1], a[2]);
    }
}
