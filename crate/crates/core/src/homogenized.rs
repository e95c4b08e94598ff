//! Galerkin solution of the homogenized equation `-∇·(A⁰ ∇u0) = f` on `D`.

use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::cell::{CellSolutionSet, HomogenizedTensorField};
use crate::coefficient::TwoScaleCoefficient;
use crate::error::Error;
use crate::fine_scale::{source_primitive, TwoScaleGradient};
use crate::quadrature::Rule;
use crate::two_scale::TwoScaleSolution;
use crate::diffusion::Diffusion;
use crate::error::{invalid, Result};
use crate::field::Field;
use crate::linalg::{CgOptions, CgReport};
use crate::mesh::Grid;
use crate::two_scale::load_vector;

#[derive(Debug, Clone)]
pub struct HomogenizedSolution {
    pub grid: Grid,
    /// Nodal values, zero on the boundary.
    pub u0: Vec<f64>,
    pub report: CgReport,
}

/// Solves on the level-`level` grid with any tensor source `a0(x, out)`.
pub fn solve_with(
    dim: usize,
    a0: impl Fn(&[f64], &mut [f64]),
    f: &Field,
    level: u32,
    opts: CgOptions,
) -> Result<HomogenizedSolution> {
    if f.dim() != dim || f.depends_on_y() {
        return Err(invalid("source must be a macroscopic field on D"));
    }
    let grid = Grid::boxed(dim, level);
    let pts = grid.quadrature_points(&Diffusion::quadrature(dim));
    let mut tensors = alloc::vec![0.0; pts.len() / dim * dim * dim];
    for (p, t) in pts.chunks(dim).zip(tensors.chunks_mut(dim * dim)) {
        a0(p, t);
    }
    let op = Diffusion::tensor(grid, &tensors)?;
    let (u0, report) = op.solve(&load_vector(&grid, f), opts)?;
    Ok(HomogenizedSolution { grid, u0, report })
}

pub fn solve_homogenized(
    a0: &HomogenizedTensorField,
    f: &Field,
    level: u32,
    opts: CgOptions,
) -> Result<HomogenizedSolution> {
    solve_with(a0.dim(), |x, out| a0.eval(x, out), f, level, opts)
}

impl HomogenizedSolution {
    /// Piecewise-constant `∇u0` on the element containing `x`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let sol = crate::two_scale::nodal_gradient(&self.grid, &self.u0, x);
        out[..self.grid.dim].copy_from_slice(&sol[..self.grid.dim]);
    }

    /// `∇u0` averaged over the elements around every node.
    pub fn nodal_gradients(&self) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim;
        let h = g.h();
        let mut out = Vec::with_capacity(g.n_nodes() * d);
        for node in 0..g.n_nodes() {
            let c = g.node_coords(node);
            let mut acc = [0.0; 3];
            let mut count = 0.0;
            for s in 0..1usize << d {
                let mut p = [0.0; 3];
                let mut inside = true;
                for k in 0..d {
                    let off = if (s >> k) & 1 == 1 { 0.5 * h } else { -0.5 * h };
                    p[k] = c[k] + off;
                    inside &= (0.0..=1.0).contains(&p[k]);
                }
                if inside {
                    let gr = crate::two_scale::nodal_gradient(g, &self.u0, &p[..d]);
                    for k in 0..d {
                        acc[k] += gr[k];
                    }
                    count += 1.0;
                }
            }
            out.extend(acc[..d].iter().map(|v| v / count));
        }
        out
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        crate::two_scale::nodal_value(&self.grid, &self.u0, x)
    }
}

/// Gradient of the two-scale limit assembled from a homogenized solve and cell solutions:
/// `∇u0(x) + Σ_l ∂_l u0(x) ∇_y w^l(x, y)`.
#[derive(Debug, Clone, Copy)]
pub struct CellRoute<'a> {
    pub homogenized: &'a HomogenizedSolution,
    pub cells: &'a CellSolutionSet,
}

impl TwoScaleGradient for CellRoute<'_> {
    fn dim(&self) -> usize {
        self.cells.dim()
    }

    fn two_scale_gradient(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut g = [0.0; 3];
        self.homogenized.gradient(x, &mut g);
        out[..d].copy_from_slice(&g[..d]);
        let mut gw = [0.0; 3];
        for l in 0..d {
            self.cells.eval(l, x, y, &mut gw);
            for p in 0..d {
                out[p] += g[l] * gw[p];
            }
        }
    }
}

impl TwoScaleGradient for TwoScaleSolution {
    fn dim(&self) -> usize {
        self.dim
    }

    fn two_scale_gradient(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.gradient(x, y, out);
    }
}

/// Panels and Gauss points per panel of the `x` rule, and trapezoid points of the `y` rule,
/// used by [`Homogenized1d`].
pub const X_PANELS: usize = 16;
pub const X_POINTS: usize = 8;
pub const Y_POINTS: usize = 64;

/// Closed-form one-dimensional two-scale limit.
///
/// With `A⁰(x) = (∫_Y A(x, y)^{-1} dy)^{-1}` the homogenized flux is `A⁰ u0' = C0 - F` and
/// `u0' + ∂_y u1 = (C0 - F) / A`. Integrals use a composite Gauss rule in `x` and the
/// periodic trapezoidal rule in `y` (spectrally accurate for smooth periodic coefficients).
#[derive(Debug, Clone)]
pub struct Homogenized1d<'a> {
    pub coeff: &'a TwoScaleCoefficient,
    pub source: &'a Field,
    pub z: Vec<f64>,
    pub c0: f64,
    pub x_rule: Rule,
    pub y_nodes: Vec<f64>,
    /// `F` at the `x` nodes.
    pub primitive: Vec<f64>,
    /// `A` on the tensor grid, `[ix * Y_POINTS + iy]`.
    pub table: Vec<f64>,
}

pub fn solve_homogenized_1d<'a>(
    coeff: &'a TwoScaleCoefficient,
    z: &[f64],
    source: &'a Field,
) -> Result<Homogenized1d<'a>> {
    if coeff.dim() != 1 || source.dim() != 1 || source.depends_on_y() {
        return Err(invalid("one-dimensional coefficient and macroscopic source required"));
    }
    if z.len() != coeff.n_terms() {
        return Err(Error::DimensionMismatch {
            expected: coeff.n_terms(),
            found: z.len(),
        });
    }
    let x_rule = Rule::gauss(X_POINTS).composite(0.0, 1.0, X_PANELS);
    let y_nodes: Vec<f64> = (0..Y_POINTS).map(|j| j as f64 / Y_POINTS as f64).collect();
    let table = coeff.tabulate(z, &x_rule.nodes, &y_nodes);
    if let Some(&bad) = table.iter().find(|v| !(**v > 0.0)) {
        return if bad.is_finite() {
            Err(Error::NotCoercive { min: bad })
        } else {
            Err(Error::NonFinite("coefficient"))
        };
    }
    let primitive: Vec<f64> = x_rule.nodes.iter().map(|&x| source_primitive(source, x)).collect();
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    for (ix, w) in x_rule.weights.iter().enumerate() {
        let inv = inverse_mean(&table[ix * Y_POINTS..(ix + 1) * Y_POINTS]);
        i0 += w * inv;
        i1 += w * primitive[ix] * inv;
    }
    Ok(Homogenized1d {
        coeff,
        source,
        z: z.to_vec(),
        c0: i1 / i0,
        x_rule,
        y_nodes,
        primitive,
        table,
    })
}

fn inverse_mean(row: &[f64]) -> f64 {
    row.iter().map(|a| 1.0 / a).sum::<f64>() / row.len() as f64
}

impl Homogenized1d<'_> {
    /// `A⁰(x)`.
    pub fn a0(&self, x: f64) -> f64 {
        let row = self.coeff.tabulate(&self.z, &[x], &self.y_nodes);
        1.0 / inverse_mean(&row)
    }

    pub fn u0_derivative(&self, x: f64) -> f64 {
        (self.c0 - source_primitive(self.source, x)) / self.a0(x)
    }

    /// `u0(x)`, by Gauss quadrature of `u0'` on `[0, x]`.
    pub fn u0(&self, x: f64) -> f64 {
        let panels = (X_PANELS as f64 * x).ceil().max(1.0) as usize;
        Rule::gauss(X_POINTS).composite(0.0, x, panels).integrate(|s| self.u0_derivative(s))
    }

    /// `∫_D ∫_Y w(x, y) (u0' + ∂_y u1) dy dx`.
    pub fn weighted_functional(&self, weight: &Field) -> f64 {
        let mut total = 0.0;
        for (ix, (&x, &wx)) in self.x_rule.nodes.iter().zip(&self.x_rule.weights).enumerate() {
            let flux = self.c0 - self.primitive[ix];
            let row = &self.table[ix * Y_POINTS..(ix + 1) * Y_POINTS];
            let mut inner = 0.0;
            for (&y, a) in self.y_nodes.iter().zip(row) {
                inner += weight.eval(&[x], &[y]) / a;
            }
            total += wx * flux * inner / Y_POINTS as f64;
        }
        total
    }

    /// Same as [`Homogenized1d::weighted_functional`] with the weight pre-tabulated on the
    /// tensor grid (`[ix * Y_POINTS + iy]`).
    pub fn tabulated_functional(&self, weight: &[f64]) -> f64 {
        let mut total = 0.0;
        for (ix, &wx) in self.x_rule.weights.iter().enumerate() {
            let flux = self.c0 - self.primitive[ix];
            let row = &self.table[ix * Y_POINTS..(ix + 1) * Y_POINTS];
            let wrow = &weight[ix * Y_POINTS..(ix + 1) * Y_POINTS];
            let inner: f64 = wrow.iter().zip(row).map(|(w, a)| w / a).sum();
            total += wx * flux * inner / Y_POINTS as f64;
        }
        total
    }

    /// `∫_D ∫_Y A (u0' + ∂_y u1) dy dx = ∫_D (C0 - F) dx`.
    pub fn flux_functional(&self) -> f64 {
        let mean_f: f64 = self.x_rule.weights.iter().zip(&self.primitive).map(|(w, f)| w * f).sum();
        self.c0 - mean_f
    }
}

impl TwoScaleGradient for Homogenized1d<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn two_scale_gradient(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let a = self.coeff.eval_unchecked(&self.z, x, y);
        out[0] = (self.c0 - source_primitive(self.source, x[0])) / a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::field::{Factor, SeparableProduct};
    use crate::quadrature::adaptive;

    fn family() -> TwoScaleCoefficient {
        let lin = Factor::Affine { c0: 1.0, c1: 1.0 };
        TwoScaleCoefficient::uniform(
            Field::constant(1, 9.0),
            alloc::vec![
                SeparableProduct::new(1.0, alloc::vec![lin], alloc::vec![Factor::Sin(1)]).unwrap(),
                SeparableProduct::new(1.0, alloc::vec![lin], alloc::vec![Factor::Cos(1)]).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn closed_form_route_matches_adaptive_quadrature() {
        let c = family();
        let f = Field::constant(1, 1.0);
        let z = [0.7, -0.4];
        let h = solve_homogenized_1d(&c, &z, &f).unwrap();
        let rule = Rule::gauss(7);
        let inv_a0 = |x: f64| {
            let mut g = |y: f64| [1.0 / c.eval_unchecked(&z, &[x], &[y])];
            adaptive(&rule, &mut g, 0.0, 1.0, 1e-13)[0]
        };
        let mut outer = |x: f64| {
            let v = inv_a0(x);
            [v, x * v]
        };
        let r = adaptive(&rule, &mut outer, 0.0, 1.0, 1e-12);
        assert!((h.c0 - r[1] / r[0]).abs() < 1e-11);
        assert!((h.a0(0.3) - 1.0 / inv_a0(0.3)).abs() < 1e-11);
        // ∫ x u0' = -∫ u0; the y-independent weight sees only u0
        let w = Field::single(SeparableProduct::macroscopic(1.0, alloc::vec![Factor::Power(1)]));
        let mut m = |x: f64| [x * h.u0_derivative(x)];
        let direct = adaptive(&rule, &mut m, 0.0, 1.0, 1e-12)[0];
        assert!((h.weighted_functional(&w) - direct).abs() < 1e-11);
    }

    #[test]
    fn flux_is_invariant_under_phase_rotation() {
        let c = family();
        let f = Field::constant(1, 1.0);
        let r = 0.8;
        let base = solve_homogenized_1d(&c, &[r, 0.0], &f).unwrap().flux_functional();
        for k in 1..8 {
            let t = k as f64 * 0.785;
            let v = solve_homogenized_1d(&c, &[r * t.cos(), r * t.sin()], &f).unwrap().flux_functional();
            assert!(((v - base) / base).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_tensor_gives_poisson_solution() {
        let f = Field::constant(1, 1.0);
        let s = solve_with(1, |_, t| t[0] = 1.0, &f, 5, CgOptions::default()).unwrap();
        for (i, v) in s.u0.iter().enumerate() {
            let x = i as f64 / 32.0;
            assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn doubling_source_doubles_solution() {
        let a = |x: &[f64], t: &mut [f64]| {
            t.copy_from_slice(&[2.0 + x[0], 0.1, 0.1, 3.0 - x[1]]);
        };
        let s1 = solve_with(2, a, &Field::constant(2, 1.0), 4, CgOptions::default()).unwrap();
        let s2 = solve_with(2, a, &Field::constant(2, 2.0), 4, CgOptions::default()).unwrap();
        for (u, v) in s1.u0.iter().zip(&s2.u0) {
            assert!((2.0 * u - v).abs() < 1e-9 * (1.0 + v.abs()));
        }
    }
}
