//! Reference solutions of the oscillating problem `-∇·(A(z; x, x/ε) ∇u^ε) = f`, `u^ε = 0` on `∂D`.
//!
//! In one dimension `a u' = C - F` with `F' = f`, and `C` follows from `u(1) = 0`; the
//! integrals are computed adaptively on every sub-interval of every ε-cell. In any dimension
//! a Q1 Galerkin solution on a mesh resolving ε is available.

use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::coefficient::TwoScaleCoefficient;
use crate::diffusion::Diffusion;
use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::linalg::{CgOptions, CgReport};
use crate::mesh::{ElementQuadrature, Grid};
use crate::quadrature::{adaptive, Rule, TensorRule};
use crate::two_scale::{interpolate, load_vector};

/// Tolerance of the adaptive quadrature in the exact 1D solver.
pub const EXACT_TOL: f64 = 1e-10;
/// Finest admissible level of the Q1 reference mesh (`1025` nodes per axis).
pub const MAX_FINE_LEVEL: u32 = 10;
pub const MIN_RESOLUTION: usize = 8;

#[derive(Debug, Clone)]
pub struct EpsilonProblem<'a> {
    pub coeff: &'a TwoScaleCoefficient,
    pub z: Vec<f64>,
    pub eps: f64,
    pub source: &'a Field,
    /// Mesh points (or quadrature panels) per ε-cell and axis.
    pub resolution: usize,
}

impl<'a> EpsilonProblem<'a> {
    pub fn new(
        coeff: &'a TwoScaleCoefficient,
        z: &[f64],
        eps: f64,
        source: &'a Field,
        resolution: usize,
    ) -> Result<Self> {
        if z.len() != coeff.n_terms() {
            return Err(Error::DimensionMismatch {
                expected: coeff.n_terms(),
                found: z.len(),
            });
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid("epsilon must lie in (0, 1]"));
        }
        let inv = 1.0 / eps;
        if (inv - inv.round()).abs() > 1e-9 * inv {
            return Err(invalid("1/epsilon must be an integer"));
        }
        if resolution < MIN_RESOLUTION {
            return Err(invalid("at least 8 points per cell are required"));
        }
        if source.dim() != coeff.dim() || source.depends_on_y() {
            return Err(invalid("source must be a macroscopic field on D"));
        }
        Ok(EpsilonProblem {
            coeff,
            z: z.to_vec(),
            eps,
            source,
            resolution,
        })
    }

    pub fn dim(&self) -> usize {
        self.coeff.dim()
    }

    pub fn cells(&self) -> usize {
        (1.0 / self.eps).round() as usize
    }

    /// `A(z; x, x/ε)`.
    #[inline]
    pub fn a(&self, x: &[f64]) -> f64 {
        let mut y = [0.0; 3];
        for (yk, xk) in y.iter_mut().zip(x) {
            *yk = xk / self.eps;
        }
        self.coeff.eval_unchecked(&self.z, x, &y[..x.len()])
    }
}

/// `F(t) = ∫_0^t f` for a macroscopic 1D source.
pub fn source_primitive(f: &Field, t: f64) -> f64 {
    if let Some(v) = f.antiderivative_1d(t) {
        return v;
    }
    let panels = (64.0 * t).ceil().max(1.0) as usize;
    Rule::gauss(8).composite(0.0, t, panels).integrate(|s| f.eval(&[s], &[0.0]))
}

pub trait FineGradient {
    fn dim(&self) -> usize;
    /// `∇u^ε(x)`.
    fn fine_gradient(&self, x: &[f64], out: &mut [f64]);
}

pub trait TwoScaleGradient {
    fn dim(&self) -> usize;
    /// `∇u0(x) + ∇_y u1(x, y)`.
    fn two_scale_gradient(&self, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// One-dimensional reference solution from the exact flux representation.
#[derive(Debug, Clone)]
pub struct ExactEps1d<'a> {
    pub problem: EpsilonProblem<'a>,
    /// The flux constant: `a u' = C - F`.
    pub c: f64,
    /// Uniform nodes, `resolution` per ε-cell.
    pub nodes: Vec<f64>,
    pub u: Vec<f64>,
}

pub fn solve_eps_1d_exact(problem: EpsilonProblem<'_>) -> Result<ExactEps1d<'_>> {
    if problem.dim() != 1 {
        return Err(invalid("the exact solver is one-dimensional"));
    }
    let panels = problem.cells() * problem.resolution;
    let h = 1.0 / panels as f64;
    let rule = Rule::gauss(7);
    let mut min_a = f64::INFINITY;
    let mut parts = Vec::with_capacity(panels);
    {
        let mut integrand = |x: f64| {
            let a = problem.a(&[x]);
            min_a = min_a.min(a);
            [1.0 / a, source_primitive(problem.source, x) / a]
        };
        for k in 0..panels {
            let (l, r) = (k as f64 * h, (k + 1) as f64 * h);
            parts.push(adaptive(&rule, &mut integrand, l, r, EXACT_TOL / panels as f64));
        }
    }
    if !min_a.is_finite() {
        return Err(Error::NonFinite("coefficient"));
    }
    if min_a <= 0.0 {
        return Err(Error::NotCoercive { min: min_a });
    }
    let total0: f64 = parts.iter().map(|p| p[0]).sum();
    let total1: f64 = parts.iter().map(|p| p[1]).sum();
    let c = total1 / total0;
    let mut u = Vec::with_capacity(panels + 1);
    let mut acc = 0.0;
    u.push(0.0);
    for p in &parts {
        acc += c * p[0] - p[1];
        u.push(acc);
    }
    let nodes = (0..=panels).map(|k| k as f64 * h).collect();
    Ok(ExactEps1d { problem, c, nodes, u })
}

impl ExactEps1d<'_> {
    pub fn flux(&self, x: f64) -> f64 {
        self.c - source_primitive(self.problem.source, x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.flux(x) / self.problem.a(&[x])
    }

    pub fn value(&self, x: f64) -> f64 {
        let n = self.nodes.len() - 1;
        let k = ((x * n as f64).floor() as usize).min(n - 1);
        let rule = Rule::gauss(7);
        let mut f = |s: f64| [self.derivative(s)];
        self.u[k] + adaptive(&rule, &mut f, self.nodes[k], x, EXACT_TOL)[0]
    }

    /// `∫_D w(x, x/ε) u'(x) dx`.
    pub fn weighted_functional(&self, weight: &Field) -> f64 {
        let rule = Rule::gauss(7);
        let eps = self.problem.eps;
        let mut f = |s: f64| [weight.eval(&[s], &[s / eps]) * self.derivative(s)];
        let n = self.nodes.len() - 1;
        (0..n)
            .map(|k| adaptive(&rule, &mut f, self.nodes[k], self.nodes[k + 1], EXACT_TOL / n as f64)[0])
            .sum()
    }

    /// `∫_D a u' dx`.
    pub fn flux_functional(&self) -> f64 {
        let rule = Rule::gauss(8).composite(0.0, 1.0, 16);
        self.c - rule.integrate(|s| source_primitive(self.problem.source, s))
    }
}

impl FineGradient for ExactEps1d<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn fine_gradient(&self, x: &[f64], out: &mut [f64]) {
        out[0] = self.derivative(x[0]);
    }
}

/// Q1 Galerkin reference solution.
#[derive(Debug, Clone)]
pub struct EpsFem {
    pub grid: Grid,
    pub eps: f64,
    pub u: Vec<f64>,
    pub report: CgReport,
}

/// Coarsest level with at least `resolution` mesh cells per ε-cell.
pub fn fine_level(eps: f64, resolution: usize) -> u32 {
    let needed = (resolution as f64 / eps).ceil();
    let mut level = 0;
    while ((1u64 << level) as f64) < needed {
        level += 1;
    }
    level
}

pub fn solve_eps_fem(problem: &EpsilonProblem<'_>, opts: CgOptions) -> Result<EpsFem> {
    let d = problem.dim();
    let level = fine_level(problem.eps, problem.resolution);
    if level > MAX_FINE_LEVEL {
        let bytes_per_node = 8 * (12 + 4 * d * d);
        let dofs = ((1usize << level) + 1).pow(d as u32);
        return Err(Error::TooLarge {
            dofs,
            bytes: dofs * bytes_per_node,
            limit: ((1usize << MAX_FINE_LEVEL) + 1).pow(d as u32) * bytes_per_node,
        });
    }
    let grid = Grid::boxed(d, level);
    let pts = grid.quadrature_points(&Diffusion::quadrature(d));
    let a: Vec<f64> = pts.chunks(d).map(|x| problem.a(x)).collect();
    let op = Diffusion::scalar(grid, &a)?;
    let (u, report) = op.solve(&load_vector(&grid, problem.source), opts)?;
    Ok(EpsFem {
        grid,
        eps: problem.eps,
        u,
        report,
    })
}

impl EpsFem {
    fn integrate(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        let d = self.grid.dim;
        let q = ElementQuadrature::gauss(d, 3);
        let pts = self.grid.quadrature_points(&q);
        let vol = self.grid.h().powi(d as i32);
        let mut total = 0.0;
        for (k, x) in pts.chunks(d).enumerate() {
            let g = interpolate(&self.grid, &self.u, x).1;
            total += vol * q.rule.weights[k % q.len()] * f(x, &g[..d]);
        }
        total
    }

    /// `∫_D w(x, x/ε) ∂_p u^ε dx`.
    pub fn weighted_functional(&self, weight: &Field, component: usize) -> f64 {
        let eps = self.eps;
        self.integrate(|x, g| {
            let mut y = [0.0; 3];
            for k in 0..x.len() {
                y[k] = x[k] / eps;
            }
            weight.eval(x, &y[..x.len()]) * g[component]
        })
    }

    /// `∫_D A^ε ∂_p u^ε dx`.
    pub fn flux_functional(&self, problem: &EpsilonProblem<'_>, component: usize) -> f64 {
        self.integrate(|x, g| problem.a(x) * g[component])
    }

    /// `‖∇u^ε‖_{L²}`.
    pub fn h1_seminorm(&self) -> f64 {
        self.integrate(|_, g| g.iter().map(|v| v * v).sum()).sqrt()
    }
}

impl FineGradient for EpsFem {
    fn dim(&self) -> usize {
        self.grid.dim
    }

    fn fine_gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = interpolate(&self.grid, &self.u, x).1;
        out[..self.grid.dim].copy_from_slice(&g[..self.grid.dim]);
    }
}

/// `‖∇u^ε − (∇u0 + ∇_y u1(·, ·/ε))‖_{L²(D)}` by composite Gauss quadrature on
/// `panels_per_axis` panels per axis, which must resolve ε by at least four panels per cell.
pub fn corrector_error(
    fine: &impl FineGradient,
    eps: f64,
    approx: &impl TwoScaleGradient,
    panels_per_axis: usize,
) -> Result<f64> {
    let d = fine.dim();
    if approx.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: approx.dim(),
        });
    }
    let spacing = 1.0 / panels_per_axis as f64;
    if spacing > eps / 4.0 {
        return Err(Error::GridTooCoarse {
            spacing,
            limit: eps / 4.0,
        });
    }
    let rule = TensorRule::new(d, &Rule::gauss(3));
    let cells = panels_per_axis.pow(d as u32);
    let vol = spacing.powi(d as i32);
    let mut total = 0.0;
    let mut x = [0.0; 3];
    let mut y = [0.0; 3];
    let mut gf = [0.0; 3];
    let mut ga = [0.0; 3];
    for cell in 0..cells {
        let mut rem = cell;
        let mut origin = [0.0; 3];
        for axis in (0..d).rev() {
            origin[axis] = (rem % panels_per_axis) as f64 * spacing;
            rem /= panels_per_axis;
        }
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            for k in 0..d {
                x[k] = origin[k] + spacing * p[k];
                y[k] = x[k] / eps;
            }
            fine.fine_gradient(&x[..d], &mut gf);
            approx.two_scale_gradient(&x[..d], &y[..d], &mut ga);
            let e: f64 = (0..d).map(|k| (gf[k] - ga[k]) * (gf[k] - ga[k])).sum();
            total += vol * w * e;
        }
    }
    Ok(total.sqrt())
}
