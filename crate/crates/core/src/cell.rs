//! Periodic cell problems, the homogenized tensor and the first-order corrector.
//!
//! Cell problems are solved at the nodes of a macroscopic grid on `D`; values between nodes
//! are obtained by Q1 interpolation in `x`.

use alloc::vec::Vec;

use crate::coefficient::TwoScaleCoefficient;
use crate::diffusion::Diffusion;
use crate::error::{invalid, Error, Result};
use crate::linalg::CgOptions;
use crate::mesh::Grid;
use crate::two_scale::{corner_weights, locate};

/// The `d` mean-zero cell solutions `w^l(x, ·)` at every node `x` of a macroscopic grid.
#[derive(Debug, Clone)]
pub struct CellSolutionSet {
    pub macro_grid: Grid,
    pub cell_grid: Grid,
    pub z: Vec<f64>,
    /// `[(node * d + l) * n_cell + j]`
    pub values: Vec<f64>,
    /// Largest CG iteration count over all solves.
    pub max_iterations: usize,
}

/// Cell solutions `(w^1, …, w^d)` for the coefficient frozen at the macroscopic point `x`.
pub fn solve_cell_problem_at(
    coeff: &TwoScaleCoefficient,
    z: &[f64],
    x: &[f64],
    level: u32,
    opts: CgOptions,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let op = cell_operator(coeff, z, x, level)?;
    let mut out = Vec::with_capacity(coeff.dim());
    let mut its = 0;
    for l in 0..coeff.dim() {
        let (w, rep) = op.solve(&op.cell_load(l), opts)?;
        its = its.max(rep.iterations);
        out.push(w);
    }
    Ok((out, its))
}

/// The cell-domain diffusion operator with `A(z; x, ·)`.
pub fn cell_operator(coeff: &TwoScaleCoefficient, z: &[f64], x: &[f64], level: u32) -> Result<Diffusion> {
    let d = coeff.dim();
    if level < 2 {
        return Err(invalid("cell level must be at least 2"));
    }
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    if z.len() != coeff.n_terms() {
        return Err(Error::DimensionMismatch {
            expected: coeff.n_terms(),
            found: z.len(),
        });
    }
    let g = Grid::torus(d, level);
    let yq = g.quadrature_points(&Diffusion::quadrature(d));
    let a = coeff.tabulate(z, x, &yq);
    if let Some(&bad) = a.iter().find(|v| !(**v > 0.0)) {
        return if bad.is_finite() {
            Err(Error::NotCoercive { min: bad })
        } else {
            Err(Error::NonFinite("coefficient"))
        };
    }
    Diffusion::scalar(g, &a)
}

pub fn solve_cell_problems(
    coeff: &TwoScaleCoefficient,
    z: &[f64],
    macro_grid: Grid,
    level: u32,
    opts: CgOptions,
) -> Result<CellSolutionSet> {
    let d = coeff.dim();
    if macro_grid.dim != d || macro_grid.periodic {
        return Err(invalid("macroscopic grid must be a box of the coefficient's dimension"));
    }
    let cell_grid = Grid::torus(d, level);
    let n_cell = cell_grid.n_nodes();
    let mut values = Vec::with_capacity(macro_grid.n_nodes() * d * n_cell);
    let mut max_iterations = 0;
    for node in 0..macro_grid.n_nodes() {
        let x = macro_grid.node_coords(node);
        let (ws, its) = solve_cell_problem_at(coeff, z, &x[..d], level, opts)?;
        max_iterations = max_iterations.max(its);
        for w in ws {
            values.extend_from_slice(&w);
        }
    }
    Ok(CellSolutionSet {
        macro_grid,
        cell_grid,
        z: z.to_vec(),
        values,
        max_iterations,
    })
}

impl CellSolutionSet {
    /// Assembles a set from per-node solutions computed elsewhere, in node order.
    pub fn from_parts(macro_grid: Grid, cell_grid: Grid, z: Vec<f64>, per_node: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let d = macro_grid.dim;
        if per_node.len() != macro_grid.n_nodes() {
            return Err(Error::MismatchedPoints);
        }
        let mut values = Vec::with_capacity(per_node.len() * d * cell_grid.n_nodes());
        for ws in per_node {
            if ws.len() != d || ws.iter().any(|w| w.len() != cell_grid.n_nodes()) {
                return Err(Error::MismatchedPoints);
            }
            for w in ws {
                values.extend_from_slice(&w);
            }
        }
        Ok(CellSolutionSet {
            macro_grid,
            cell_grid,
            z,
            values,
            max_iterations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.macro_grid.dim
    }

    /// Nodal values of `w^l` at macroscopic node `node`.
    pub fn cell_solution(&self, node: usize, l: usize) -> &[f64] {
        let n = self.cell_grid.n_nodes();
        let k = node * self.dim() + l;
        &self.values[k * n..(k + 1) * n]
    }

    /// `w^l(x, y)` and `∇_y w^l(x, y)`, interpolated in both variables.
    pub fn eval(&self, l: usize, x: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.dim();
        let corners = 1usize << d;
        let (ix, tx) = locate(&self.macro_grid, x);
        let (iy, ty) = locate(&self.cell_grid, y);
        let nxa = self.macro_grid.nodes_per_axis();
        let nya = self.cell_grid.nodes_per_axis();
        let hx = self.macro_grid.h();
        let hy = self.cell_grid.h();
        grad[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut val = 0.0;
        for cx in 0..corners {
            let (nx, wx, _) = corner_weights(&ix, &tx, cx, d, nxa, false, hx);
            if wx == 0.0 {
                continue;
            }
            let w = self.cell_solution(nx, l);
            for cy in 0..corners {
                let (ny, wy, dwy) = corner_weights(&iy, &ty, cy, d, nya, true, hy);
                val += wx * wy * w[ny];
                for p in 0..d {
                    grad[p] += wx * dwy[p] * w[ny];
                }
            }
        }
        val
    }
}

/// `A⁰(z; x)` at the nodes of the macroscopic grid, `d * d` entries per node.
#[derive(Debug, Clone)]
pub struct HomogenizedTensorField {
    pub macro_grid: Grid,
    pub tensors: Vec<f64>,
}

pub fn homogenized_tensor(
    coeff: &TwoScaleCoefficient,
    z: &[f64],
    cells: &CellSolutionSet,
) -> Result<HomogenizedTensorField> {
    let d = coeff.dim();
    if cells.dim() != d || cells.z.as_slice() != z {
        return Err(Error::MismatchedPoints);
    }
    let mut tensors = Vec::with_capacity(cells.macro_grid.n_nodes() * d * d);
    for node in 0..cells.macro_grid.n_nodes() {
        let x = cells.macro_grid.node_coords(node);
        let op = cell_operator(coeff, z, &x[..d], cells.cell_grid.level)?;
        let fields: Vec<&[f64]> = (0..d).map(|l| cells.cell_solution(node, l)).collect();
        tensors.extend(op.corrected_energy(&fields));
    }
    Ok(HomogenizedTensorField {
        macro_grid: cells.macro_grid,
        tensors,
    })
}

impl HomogenizedTensorField {
    pub fn dim(&self) -> usize {
        self.macro_grid.dim
    }

    pub fn at_node(&self, node: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.tensors[node * dd..(node + 1) * dd]
    }

    /// Q1 interpolation between macroscopic nodes.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let dd = d * d;
        let (ix, tx) = locate(&self.macro_grid, x);
        let nxa = self.macro_grid.nodes_per_axis();
        out[..dd].iter_mut().for_each(|v| *v = 0.0);
        for c in 0..1usize << d {
            let (node, w, _) = corner_weights(&ix, &tx, c, d, nxa, false, self.macro_grid.h());
            for (o, t) in out.iter_mut().zip(self.at_node(node)) {
                *o += w * t;
            }
        }
    }
}

/// `u1(x, y) = Σ_l ∂u0/∂x_l (x) w^l(x, y)` with `∇u0` supplied at the macroscopic nodes.
#[derive(Debug, Clone)]
pub struct Corrector<'a> {
    cells: &'a CellSolutionSet,
    grad_u0: Vec<f64>,
}

pub fn corrector_field(cells: &CellSolutionSet, grad_u0: Vec<f64>) -> Result<Corrector<'_>> {
    let expected = cells.macro_grid.n_nodes() * cells.dim();
    if grad_u0.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: grad_u0.len(),
        });
    }
    Ok(Corrector { cells, grad_u0 })
}

impl Corrector<'_> {
    /// Interpolated `∇u0` at `x`.
    pub fn macro_gradient(&self, x: &[f64], out: &mut [f64]) {
        let g = &self.cells.macro_grid;
        let d = g.dim;
        let (ix, tx) = locate(g, x);
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        for c in 0..1usize << d {
            let (node, w, _) = corner_weights(&ix, &tx, c, d, g.nodes_per_axis(), false, g.h());
            for p in 0..d {
                out[p] += w * self.grad_u0[node * d + p];
            }
        }
    }

    /// `u1(x, y)`; `grad_y` receives `∇_y u1(x, y)`.
    pub fn eval(&self, x: &[f64], y: &[f64], grad_y: &mut [f64]) -> f64 {
        let d = self.cells.dim();
        let mut gu = [0.0; 3];
        self.macro_gradient(x, &mut gu);
        let mut gw = [0.0; 3];
        grad_y[..d].iter_mut().for_each(|v| *v = 0.0);
        let mut val = 0.0;
        for l in 0..d {
            let w = self.cells.eval(l, x, y, &mut gw);
            val += gu[l] * w;
            for p in 0..d {
                grad_y[p] += gu[l] * gw[p];
            }
        }
        val
    }
}
