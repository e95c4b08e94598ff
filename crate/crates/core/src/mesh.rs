//! Uniform Q1 meshes on the unit box (Dirichlet domain) and the unit torus (cell domain).
//!
//! Level `l` has meshwidth `2^{-l}`. Nodes are stored row-major with the last axis fastest.

use alloc::vec;
use alloc::vec::Vec;

use crate::quadrature::{Rule, TensorRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub dim: usize,
    pub level: u32,
    pub periodic: bool,
}

impl Grid {
    pub fn new(dim: usize, level: u32, periodic: bool) -> Self {
        assert!((1..=3).contains(&dim), "grids are 1-, 2- or 3-dimensional");
        Grid {
            dim,
            level,
            periodic,
        }
    }

    pub fn boxed(dim: usize, level: u32) -> Self {
        Self::new(dim, level, false)
    }

    pub fn torus(dim: usize, level: u32) -> Self {
        Self::new(dim, level, true)
    }

    pub fn h(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    pub fn cells_per_axis(&self) -> usize {
        1 << self.level
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.cells_per_axis() + usize::from(!self.periodic)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn n_elements(&self) -> usize {
        self.cells_per_axis().pow(self.dim as u32)
    }

    /// Element corners, `2^dim` per element; corner bit `k` selects the upper node on axis `k`.
    pub fn element_nodes(&self) -> Vec<usize> {
        let d = self.dim;
        let nc = self.cells_per_axis();
        let nn = self.nodes_per_axis();
        let corners = 1 << d;
        let mut out = Vec::with_capacity(self.n_elements() * corners);
        let mut e_idx = [0usize; 3];
        for e in 0..self.n_elements() {
            unflatten(e, nc, d, &mut e_idx);
            for c in 0..corners {
                let mut flat = 0;
                for axis in 0..d {
                    let mut i = e_idx[axis] + ((c >> axis) & 1);
                    if self.periodic && i == nn {
                        i = 0;
                    }
                    flat = flat * nn + i;
                }
                out.push(flat);
            }
        }
        out
    }

    /// Lower-left corner coordinates of every element, `dim` entries each.
    pub fn element_origins(&self) -> Vec<f64> {
        let d = self.dim;
        let nc = self.cells_per_axis();
        let h = self.h();
        let mut out = Vec::with_capacity(self.n_elements() * d);
        let mut e_idx = [0usize; 3];
        for e in 0..self.n_elements() {
            unflatten(e, nc, d, &mut e_idx);
            for &i in &e_idx[..d] {
                out.push(i as f64 * h);
            }
        }
        out
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let mut idx = [0usize; 3];
        unflatten(node, self.nodes_per_axis(), self.dim, &mut idx);
        let h = self.h();
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            p[k] = idx[k] as f64 * h;
        }
        p
    }

    /// All node coordinates, `dim` entries per node.
    pub fn all_node_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_nodes() * self.dim);
        for n in 0..self.n_nodes() {
            out.extend_from_slice(&self.node_coords(n)[..self.dim]);
        }
        out
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        if self.periodic {
            return false;
        }
        let mut idx = [0usize; 3];
        let nn = self.nodes_per_axis();
        unflatten(node, nn, self.dim, &mut idx);
        idx[..self.dim].iter().any(|&i| i == 0 || i == nn - 1)
    }

    /// Quadrature points of every element (element-major), `dim` entries each.
    pub fn quadrature_points(&self, q: &ElementQuadrature) -> Vec<f64> {
        let d = self.dim;
        let h = self.h();
        let origins = self.element_origins();
        let mut out = Vec::with_capacity(self.n_elements() * q.len() * d);
        for e in 0..self.n_elements() {
            let o = &origins[e * d..(e + 1) * d];
            for p in &q.rule.points {
                for k in 0..d {
                    out.push(o[k] + h * p[k]);
                }
            }
        }
        out
    }

    /// Values at the nodes of `fine` obtained by Q1 interpolation of nodal `values` on `self`.
    pub fn prolong(&self, values: &[f64], fine: &Grid) -> Vec<f64> {
        assert!(fine.level >= self.level && fine.dim == self.dim && fine.periodic == self.periodic);
        let d = self.dim;
        let ratio = 1usize << (fine.level - self.level);
        let nn_c = self.nodes_per_axis();
        let nn_f = fine.nodes_per_axis();
        let mut out = vec![0.0; fine.n_nodes()];
        let mut idx = [0usize; 3];
        for (n, o) in out.iter_mut().enumerate() {
            unflatten(n, nn_f, d, &mut idx);
            let mut lo = [0usize; 3];
            let mut t = [0.0; 3];
            for k in 0..d {
                lo[k] = idx[k] / ratio;
                t[k] = (idx[k] % ratio) as f64 / ratio as f64;
            }
            let mut v = 0.0;
            for c in 0..(1usize << d) {
                let mut w = 1.0;
                let mut flat = 0;
                let mut skip = false;
                for k in 0..d {
                    let up = (c >> k) & 1;
                    let wk = if up == 1 { t[k] } else { 1.0 - t[k] };
                    if wk == 0.0 {
                        skip = true;
                        break;
                    }
                    w *= wk;
                    let mut i = lo[k] + up;
                    if self.periodic && i == nn_c {
                        i = 0;
                    }
                    flat = flat * nn_c + i;
                }
                if !skip {
                    v += w * values[flat];
                }
            }
            *o = v;
        }
        out
    }
}

/// One axis of a tensor-product nodal array for [`prolong_axes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axis {
    pub coarse_nodes: usize,
    pub ratio: usize,
    pub periodic: bool,
}

impl Axis {
    fn fine_nodes(&self) -> usize {
        if self.periodic {
            self.coarse_nodes * self.ratio
        } else {
            (self.coarse_nodes - 1) * self.ratio + 1
        }
    }
}

/// Piecewise-linear interpolation of a row-major nodal array, one axis at a time.
pub fn prolong_axes(values: &[f64], axes: &[Axis]) -> Vec<f64> {
    let mut dims: Vec<usize> = axes.iter().map(|a| a.coarse_nodes).collect();
    let mut cur = values.to_vec();
    for (k, ax) in axes.iter().enumerate() {
        if ax.ratio == 1 {
            continue;
        }
        let nf = ax.fine_nodes();
        let outer: usize = dims[..k].iter().product();
        let inner: usize = dims[k + 1..].iter().product();
        let nc = dims[k];
        let mut next = vec![0.0; outer * nf * inner];
        for o in 0..outer {
            for j in 0..nf {
                let lo = j / ax.ratio;
                let t = (j % ax.ratio) as f64 / ax.ratio as f64;
                let hi = if ax.periodic && lo + 1 == nc { 0 } else { (lo + 1).min(nc - 1) };
                let src_lo = (o * nc + lo) * inner;
                let src_hi = (o * nc + hi) * inner;
                let dst = (o * nf + j) * inner;
                for i in 0..inner {
                    next[dst + i] = if t == 0.0 {
                        cur[src_lo + i]
                    } else {
                        (1.0 - t) * cur[src_lo + i] + t * cur[src_hi + i]
                    };
                }
            }
        }
        dims[k] = nf;
        cur = next;
    }
    cur
}

pub(crate) fn unflatten(mut flat: usize, n: usize, d: usize, out: &mut [usize; 3]) {
    for axis in (0..d).rev() {
        out[axis] = flat % n;
        flat /= n;
    }
}

/// Q1 shape functions and gradients at a tensor Gauss rule on the reference element.
#[derive(Debug, Clone)]
pub struct ElementQuadrature {
    pub dim: usize,
    pub rule: TensorRule,
    /// `[q * corners + c]`
    pub shape: Vec<f64>,
    /// `[(q * corners + c) * dim + k]`, derivative on the reference cell.
    pub grad: Vec<f64>,
}

impl ElementQuadrature {
    pub fn gauss(dim: usize, points_per_axis: usize) -> Self {
        let rule = TensorRule::new(dim, &Rule::gauss(points_per_axis));
        let corners = 1 << dim;
        let mut shape = Vec::with_capacity(rule.len() * corners);
        let mut grad = Vec::with_capacity(rule.len() * corners * dim);
        for p in &rule.points {
            for c in 0..corners {
                let mut s = 1.0;
                for k in 0..dim {
                    s *= if (c >> k) & 1 == 1 { p[k] } else { 1.0 - p[k] };
                }
                shape.push(s);
                for k in 0..dim {
                    let mut g = 1.0;
                    for m in 0..dim {
                        let up = (c >> m) & 1 == 1;
                        g *= if m == k {
                            if up {
                                1.0
                            } else {
                                -1.0
                            }
                        } else if up {
                            p[m]
                        } else {
                            1.0 - p[m]
                        };
                    }
                    grad.push(g);
                }
            }
        }
        ElementQuadrature {
            dim,
            rule,
            shape,
            grad,
        }
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    pub fn corners(&self) -> usize {
        1 << self.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let g = Grid::boxed(2, 3);
        assert_eq!(g.n_nodes(), 81);
        assert_eq!(g.n_elements(), 64);
        let t = Grid::torus(2, 3);
        assert_eq!(t.n_nodes(), 64);
        assert_eq!(t.element_nodes().len(), 256);
    }

    #[test]
    fn torus_wraps() {
        let t = Grid::torus(1, 2);
        assert_eq!(t.element_nodes(), vec![0, 1, 1, 2, 2, 3, 3, 0]);
    }

    #[test]
    fn shape_functions_partition_unity() {
        let q = ElementQuadrature::gauss(2, 2);
        for iq in 0..q.len() {
            let s: f64 = q.shape[iq * 4..iq * 4 + 4].iter().sum();
            assert!((s - 1.0).abs() < 1e-15);
            for k in 0..2 {
                let g: f64 = (0..4).map(|c| q.grad[(iq * 4 + c) * 2 + k]).sum();
                assert!(g.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn prolongation_reproduces_bilinear() {
        let f = Grid::boxed(2, 3);
        let lin = |p: [f64; 3]| 1.0 + 2.0 * p[0] - p[1] + 3.0 * p[0] * p[1];
        let one = Grid::boxed(2, 0);
        let vals0: Vec<f64> = (0..one.n_nodes()).map(|n| lin(one.node_coords(n))).collect();
        let fine0 = one.prolong(&vals0, &f);
        for (n, v) in fine0.iter().enumerate() {
            assert!((v - lin(f.node_coords(n))).abs() < 1e-14);
        }
    }

    #[test]
    fn axiswise_prolongation_matches_grid_prolongation() {
        let c = Grid::boxed(2, 1);
        let f = Grid::boxed(2, 3);
        let vals: Vec<f64> = (0..c.n_nodes()).map(|n| (n as f64 * 0.37).sin()).collect();
        let ax = Axis {
            coarse_nodes: 3,
            ratio: 4,
            periodic: false,
        };
        let a = prolong_axes(&vals, &[ax, ax]);
        let b = c.prolong(&vals, &f);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn periodic_prolongation_wraps() {
        let c = Grid::torus(1, 1);
        let f = Grid::torus(1, 2);
        assert_eq!(c.prolong(&[0.0, 2.0], &f), vec![0.0, 1.0, 2.0, 1.0]);
    }
}
