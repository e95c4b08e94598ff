//! Hierarchical bases on uniform 1D grids and their tensor products.
//!
//! Every node of the level-`L` grid carries exactly one basis function; its level is the
//! coarsest level on which the node appears. Coefficients are therefore stored in nodal
//! layout and the synthesis `T` (coefficients to nodal values) runs in place, level by level.
//!
//! * [`BasisKind::Hat`]: hierarchical hat functions (the basis for the macroscopic unknown).
//! * [`BasisKind::Interval`]: level 0 = hats at the end points, level 1 = hat at the midpoint,
//!   levels `l >= 2` = piecewise-linear wavelets with values `(-1, 2, -1)` around the odd
//!   nodes of the level grid, with `-2` on the end point for the two boundary wavelets.
//! * [`BasisKind::Periodic`]: level 0 = the constant, levels `l >= 1` = the same interior
//!   wavelets wrapped around the torus. Every non-constant function has mean zero.

use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Hat,
    Interval,
    Periodic,
}

/// Level-dependent scaling of the basis functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Peak values as tabulated for the reference wavelet, damped by `2^{-(l-1)/2}`.
    Tabulated,
    /// Comparable `L^2` norms across levels.
    L2,
    /// Comparable `H^1` seminorms across levels.
    H1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis1d {
    pub kind: BasisKind,
    pub level: u32,
    scales: Vec<f64>,
}

impl Basis1d {
    pub fn new(kind: BasisKind, level: u32, norm: Normalization) -> Self {
        let scales = (0..=level)
            .map(|l| match kind {
                BasisKind::Hat => 1.0,
                _ => level_scale(norm, l),
            })
            .collect();
        Basis1d {
            kind,
            level,
            scales,
        }
    }

    pub fn periodic(&self) -> bool {
        self.kind == BasisKind::Periodic
    }

    pub fn len(&self) -> usize {
        (1usize << self.level) + usize::from(!self.periodic())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node_level(&self, i: usize) -> u32 {
        node_level(self.level, i, self.periodic())
    }

    pub fn scale(&self, level: u32) -> f64 {
        self.scales[level as usize]
    }

    /// Coefficients to nodal values, in place.
    pub fn synthesize(&self, v: &mut [f64]) {
        self.synthesize_rows(v, 1);
    }

    /// Transpose of [`Basis1d::synthesize`], in place.
    pub fn adjoint(&self, r: &mut [f64]) {
        self.adjoint_rows(r, 1);
    }

    /// [`Basis1d::synthesize`] applied to every column of a `len() x width` row-major block.
    pub fn synthesize_rows(&self, v: &mut [f64], width: usize) {
        debug_assert_eq!(v.len(), self.len() * width);
        let n = self.len();
        let s0 = self.scales[0];
        scale_row(v, 0, width, s0);
        if !self.periodic() {
            scale_row(v, n - 1, width, s0);
        }
        let mut coeffs = Vec::new();
        for l in 1..=self.level {
            let s = self.scales[l as usize];
            let stride = 1usize << (self.level - l);
            let cells = 1usize << l;
            let hat_like = self.kind == BasisKind::Hat || (self.kind == BasisKind::Interval && l == 1);
            let gain = if hat_like { s } else { 2.0 * s };
            if !hat_like {
                coeffs.clear();
                for k in (1..cells).step_by(2) {
                    let i = k * stride * width;
                    coeffs.extend_from_slice(&v[i..i + width]);
                }
            }
            for k in (1..cells).step_by(2) {
                let (left, right) = self.neighbours(k, cells, stride);
                let (i, a, b) = (k * stride * width, left * width, right * width);
                for t in 0..width {
                    v[i + t] = 0.5 * (v[a + t] + v[b + t]) + gain * v[i + t];
                }
            }
            if hat_like {
                continue;
            }
            for (m, k) in (1..cells).step_by(2).enumerate() {
                let (left, right) = self.neighbours(k, cells, stride);
                let (wl, wr) = self.edge_weights(k, cells);
                let c = &coeffs[m * width..(m + 1) * width];
                let (a, b) = (left * width, right * width);
                for t in 0..width {
                    v[a + t] -= wl * s * c[t];
                }
                for t in 0..width {
                    v[b + t] -= wr * s * c[t];
                }
            }
        }
    }

    /// [`Basis1d::adjoint`] applied to every column of a `len() x width` row-major block.
    pub fn adjoint_rows(&self, r: &mut [f64], width: usize) {
        debug_assert_eq!(r.len(), self.len() * width);
        let n = self.len();
        let mut odd = Vec::new();
        for l in (1..=self.level).rev() {
            let s = self.scales[l as usize];
            let stride = 1usize << (self.level - l);
            let cells = 1usize << l;
            let hat_like = self.kind == BasisKind::Hat || (self.kind == BasisKind::Interval && l == 1);
            odd.clear();
            for k in (1..cells).step_by(2) {
                let i = k * stride * width;
                odd.extend_from_slice(&r[i..i + width]);
            }
            for k in (1..cells).step_by(2) {
                let (left, right) = self.neighbours(k, cells, stride);
                let (i, a, b) = (k * stride * width, left * width, right * width);
                if hat_like {
                    for t in 0..width {
                        r[i + t] *= s;
                    }
                } else {
                    let (wl, wr) = self.edge_weights(k, cells);
                    for t in 0..width {
                        r[i + t] = s * (2.0 * r[i + t] - wl * r[a + t] - wr * r[b + t]);
                    }
                }
            }
            for (m, k) in (1..cells).step_by(2).enumerate() {
                let (left, right) = self.neighbours(k, cells, stride);
                let o = &odd[m * width..(m + 1) * width];
                let (a, b) = (left * width, right * width);
                for t in 0..width {
                    r[a + t] += 0.5 * o[t];
                }
                for t in 0..width {
                    r[b + t] += 0.5 * o[t];
                }
            }
        }
        let s0 = self.scales[0];
        scale_row(r, 0, width, s0);
        if !self.periodic() {
            scale_row(r, n - 1, width, s0);
        }
    }

    #[inline]
    fn neighbours(&self, k: usize, cells: usize, stride: usize) -> (usize, usize) {
        let right = if self.periodic() && k + 1 == cells { 0 } else { (k + 1) * stride };
        ((k - 1) * stride, right)
    }

    #[inline]
    fn edge_weights(&self, k: usize, cells: usize) -> (f64, f64) {
        if self.periodic() {
            return (1.0, 1.0);
        }
        let wl = if k == 1 { 2.0 } else { 1.0 };
        let wr = if k + 1 == cells { 2.0 } else { 1.0 };
        (wl, wr)
    }

    /// Nodal values of the basis function attached to node `i`.
    pub fn function_values(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[i] = 1.0;
        self.synthesize(&mut v);
        v
    }

    /// Squared `L^2` norms and squared `H^1` seminorms of all basis functions.
    pub fn norms(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let h = 1.0 / (1u64 << self.level) as f64;
        let cells = 1usize << self.level;
        let mut l2 = vec![0.0; n];
        let mut h1 = vec![0.0; n];
        for i in 0..n {
            let v = self.function_values(i);
            let (mut a, mut b) = (0.0, 0.0);
            for c in 0..cells {
                let v0 = v[c];
                let v1 = v[(c + 1) % n];
                a += h / 3.0 * (v0 * v0 + v0 * v1 + v1 * v1);
                b += (v1 - v0) * (v1 - v0) / h;
            }
            l2[i] = a;
            h1[i] = b;
        }
        (l2, h1)
    }

    /// Number of basis functions per level.
    pub fn level_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.level as usize + 1];
        for i in 0..self.len() {
            out[self.node_level(i) as usize] += 1;
        }
        out
    }
}

fn level_scale(norm: Normalization, l: u32) -> f64 {
    let two = 2f64;
    match norm {
        Normalization::Tabulated => {
            if l >= 2 {
                two.powf(-((l - 1) as f64) / 2.0)
            } else {
                1.0
            }
        }
        Normalization::L2 => two.powf(l as f64 / 2.0),
        Normalization::H1 => two.powf(-(l as f64) / 2.0),
    }
}

/// `dst (cols x rows) = src (rows x cols)^T`, both row-major.
fn transpose(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[inline]
fn scale_row(v: &mut [f64], row: usize, width: usize, s: f64) {
    v[row * width..(row + 1) * width].iter_mut().for_each(|x| *x *= s);
}

/// Level of node `i` on the level-`level` grid.
pub fn node_level(level: u32, i: usize, periodic: bool) -> u32 {
    let n = 1usize << level;
    if i == 0 || (!periodic && i == n) {
        0
    } else {
        level - i.trailing_zeros()
    }
}

/// Level index on the coarse-mesh-of-width-1/2 convention: levels 0 and 1 are merged.
#[inline]
pub fn merged_level(l: u32) -> u32 {
    l.saturating_sub(1)
}

/// Applies `basis[k]` (or its adjoint) along axis `k` of a row-major array.
pub fn transform_nd(data: &mut [f64], bases: &[&Basis1d], adjoint: bool) {
    let dims: Vec<usize> = bases.iter().map(|b| b.len()).collect();
    debug_assert_eq!(data.len(), dims.iter().product::<usize>());
    let mut scratch = Vec::new();
    for (axis, basis) in bases.iter().enumerate() {
        let n = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let outer = data.len() / n;
        if inner == 1 && outer > 1 {
            // contiguous lines are slow to sweep one at a time; transpose so they become columns
            scratch.resize(data.len(), 0.0);
            transpose(data, &mut scratch, outer, n);
            if adjoint {
                basis.adjoint_rows(&mut scratch, outer);
            } else {
                basis.synthesize_rows(&mut scratch, outer);
            }
            transpose(&scratch, data, n, outer);
            continue;
        }
        for block in data.chunks_mut(n * inner) {
            if adjoint {
                basis.adjoint_rows(block, inner);
            } else {
                basis.synthesize_rows(block, inner);
            }
        }
    }
}

/// Maximum per-axis level of every entry of a row-major array with the given axis bases.
pub fn max_levels(bases: &[&Basis1d]) -> Vec<u32> {
    let dims: Vec<usize> = bases.iter().map(|b| b.len()).collect();
    let total: usize = dims.iter().product();
    let mut out = vec![0u32; total];
    let mut idx = vec![0usize; dims.len()];
    for o in out.iter_mut() {
        let mut m = 0;
        for (k, b) in bases.iter().enumerate() {
            m = m.max(b.node_level(idx[k]));
        }
        *o = m;
        for k in (0..dims.len()).rev() {
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
