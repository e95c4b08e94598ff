//! Full and sparse tensor-product Galerkin discretization of the two-scale homogenized problem
//!
//! ```text
//! find (u0, u1):  ∫_D ∫_Y A (∇u0 + ∇_y u1)·(∇v0 + ∇_y v1) dy dx = ∫_D f v0 dx
//! ```
//!
//! `u0` lives in the Q1 space on `D` with zero boundary values, expanded in hierarchical hats;
//! `u1` lives in `V^L(D) ⊗ V^L_#(Y)` modulo functions constant in `y`, expanded in tensor
//! products of interval and periodic wavelets. The sparse space keeps the products whose
//! merged levels satisfy `l_x + l_y <= L - 1`. The operator is applied matrix-free: wavelet
//! synthesis, nodal Q1 stiffness application on the product grid, wavelet adjoint.

use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::coefficient::TwoScaleCoefficient;
use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::linalg::{dot, pcg, CgOptions, CgReport};
use crate::mesh::{prolong_axes, unflatten, Axis, ElementQuadrature, Grid};
use crate::wavelet::{max_levels, merged_level, transform_nd, Basis1d, BasisKind, Normalization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    Full,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoScaleSettings {
    pub level: u32,
    pub space: SpaceKind,
    pub cg: CgOptions,
    /// Refuse to build systems whose working set exceeds this many bytes.
    pub memory_limit: usize,
}

impl TwoScaleSettings {
    pub fn new(level: u32, space: SpaceKind) -> Self {
        TwoScaleSettings {
            level,
            space,
            cg: CgOptions {
                rel_tol: 1e-10,
                max_iter: 4000,
            },
            memory_limit: 1 << 31,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofCount {
    pub u0: usize,
    pub u1_full: usize,
    pub u1_sparse: usize,
}

impl DofCount {
    pub fn full(&self) -> usize {
        self.u0 + self.u1_full
    }

    pub fn sparse(&self) -> usize {
        self.u0 + self.u1_sparse
    }
}

/// Exact unknown counts of both spaces; `u1` is counted modulo functions constant in `y`.
pub fn count_dofs(dim: usize, level: u32) -> DofCount {
    let bx = Basis1d::new(BasisKind::Interval, level, Normalization::L2);
    let by = Basis1d::new(BasisKind::Periodic, level, Normalization::L2);
    let hx = tensor_level_histogram(&bx.level_counts(), dim);
    let hy = tensor_level_histogram(&by.level_counts(), dim);
    let mut full = 0;
    let mut sparse = 0;
    for (lx, &nx) in hx.iter().enumerate() {
        for (ly, &ny) in hy.iter().enumerate().skip(1) {
            full += nx * ny;
            if in_sparse_set(lx as u32, ly as u32, level) {
                sparse += nx * ny;
            }
        }
    }
    let interior = (1usize << level).saturating_sub(1);
    DofCount {
        u0: interior.pow(dim as u32),
        u1_full: full,
        u1_sparse: sparse,
    }
}

/// Counts of `d`-fold tensor products by their maximum level.
fn tensor_level_histogram(counts: &[usize], dim: usize) -> Vec<usize> {
    // number of products with every factor at level <= l, then difference
    let mut cumulative = Vec::with_capacity(counts.len());
    let mut acc = 0usize;
    for &c in counts {
        acc += c;
        cumulative.push(acc.pow(dim as u32));
    }
    let mut out = vec![0; counts.len()];
    for l in 0..counts.len() {
        out[l] = cumulative[l] - if l > 0 { cumulative[l - 1] } else { 0 };
    }
    out
}

#[inline]
fn in_sparse_set(lx: u32, ly: u32, level: u32) -> bool {
    merged_level(lx) + merged_level(ly) < level.max(1)
}

#[derive(Debug, Clone)]
pub struct TwoScaleSystem {
    pub dim: usize,
    pub settings: TwoScaleSettings,
    pub gx: Grid,
    pub gy: Grid,
    ex: Vec<usize>,
    ey: Vec<usize>,
    quad: ElementQuadrature,
    /// Coefficient times quadrature weights, `[(ex * nq + qx) * my + ey * nq + qy]`.
    aw: Vec<f64>,
    hat: Basis1d,
    wav_x: Basis1d,
    wav_y: Basis1d,
    active0: Vec<bool>,
    active1: Vec<bool>,
    diag: Vec<f64>,
    load: Vec<f64>,
}

/// Bytes needed for a system of the given size, before allocation.
pub fn memory_estimate(dim: usize, level: u32) -> (usize, usize) {
    let gx = Grid::boxed(dim, level);
    let gy = Grid::torus(dim, level);
    let nq = 1usize << dim;
    let n = gx.n_nodes() * (gy.n_nodes() + 1);
    let table = gx.n_elements() * nq * gy.n_elements() * nq;
    let scratch = 2 * gx.n_nodes() * gy.n_elements() * nq * dim;
    (n, 8 * (table + scratch + 12 * n))
}

impl TwoScaleSystem {
    pub fn assemble(
        coeff: &TwoScaleCoefficient,
        z: &[f64],
        source: &Field,
        settings: TwoScaleSettings,
    ) -> Result<Self> {
        let d = coeff.dim();
        if z.len() != coeff.n_terms() {
            return Err(Error::DimensionMismatch {
                expected: coeff.n_terms(),
                found: z.len(),
            });
        }
        if source.dim() != d || source.depends_on_y() {
            return Err(invalid("source must be a macroscopic field on D"));
        }
        let level = settings.level;
        if level < 1 {
            return Err(invalid("two-scale level must be at least 1"));
        }
        let (dofs, bytes) = memory_estimate(d, level);
        if bytes > settings.memory_limit {
            return Err(Error::TooLarge {
                dofs,
                bytes,
                limit: settings.memory_limit,
            });
        }
        let gx = Grid::boxed(d, level);
        let gy = Grid::torus(d, level);
        let quad = ElementQuadrature::gauss(d, 2);
        let xq = gx.quadrature_points(&quad);
        let yq = gy.quadrature_points(&quad);
        let mut aw = coeff.tabulate(z, &xq, &yq);
        let nq = quad.len();
        let my = gy.n_elements() * nq;
        let vol_x = gx.h().powi(d as i32);
        let vol_y = gy.h().powi(d as i32);
        let mut min_a = f64::INFINITY;
        for (row, chunk) in aw.chunks_mut(my).enumerate() {
            let wx = vol_x * quad.rule.weights[row % nq];
            for (m, v) in chunk.iter_mut().enumerate() {
                min_a = min_a.min(*v);
                *v *= wx * vol_y * quad.rule.weights[m % nq];
            }
        }
        if !min_a.is_finite() {
            return Err(Error::NonFinite("coefficient table"));
        }
        if min_a <= 0.0 {
            return Err(Error::NotCoercive { min: min_a });
        }

        let hat = Basis1d::new(BasisKind::Hat, level, Normalization::L2);
        let wav_x = Basis1d::new(BasisKind::Interval, level, Normalization::L2);
        let wav_y = Basis1d::new(BasisKind::Periodic, level, Normalization::H1);

        let n0 = gx.n_nodes();
        let n_y = gy.n_nodes();
        let active0: Vec<bool> = (0..n0).map(|i| !gx.is_boundary(i)).collect();
        let lev_x = max_levels(&vec![&wav_x; d]);
        let lev_y = max_levels(&vec![&wav_y; d]);
        let mut active1 = vec![false; n0 * n_y];
        for (i, &lx) in lev_x.iter().enumerate() {
            for (j, &ly) in lev_y.iter().enumerate() {
                active1[i * n_y + j] = ly >= 1
                    && (settings.space == SpaceKind::Full || in_sparse_set(lx, ly, level));
            }
        }

        // Jacobi scaling from the energies of the basis functions for A = 1
        let (hat_l2, hat_h1) = hat.norms();
        let (wx_l2, _) = wav_x.norms();
        let (wy_l2, wy_h1) = wav_y.norms();
        let nxa = gx.nodes_per_axis();
        let nya = gy.nodes_per_axis();
        let mut diag = vec![0.0; n0 + n0 * n_y];
        let mut idx = [0usize; 3];
        let mut energy0 = vec![0.0; n0];
        let mut mass_x = vec![0.0; n0];
        for i in 0..n0 {
            unflatten(i, nxa, d, &mut idx);
            energy0[i] = gradient_energy(&idx[..d], &hat_l2, &hat_h1);
            mass_x[i] = idx[..d].iter().map(|&k| wx_l2[k]).product();
        }
        let mut energy_y = vec![0.0; n_y];
        for (j, e) in energy_y.iter_mut().enumerate() {
            unflatten(j, nya, d, &mut idx);
            *e = gradient_energy(&idx[..d], &wy_l2, &wy_h1);
        }
        for i in 0..n0 {
            if active0[i] {
                diag[i] = 1.0 / energy0[i];
            }
            for j in 0..n_y {
                let k = i * n_y + j;
                if active1[k] {
                    diag[n0 + k] = 1.0 / (mass_x[i] * energy_y[j]);
                }
            }
        }

        let load = load_vector(&gx, source);
        Ok(TwoScaleSystem {
            dim: d,
            settings,
            ex: gx.element_nodes(),
            ey: gy.element_nodes(),
            gx,
            gy,
            quad,
            aw,
            hat,
            wav_x,
            wav_y,
            active0,
            active1,
            diag,
            load,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.active0.iter().filter(|&&a| a).count() + self.active1.iter().filter(|&&a| a).count()
    }

    pub fn n_x(&self) -> usize {
        self.gx.n_nodes()
    }

    pub fn n_y(&self) -> usize {
        self.gy.n_nodes()
    }

    /// Nodal bilinear form: `(r0, r1) = K (u0, u1)`.
    pub fn apply_nodal(&self, u0: &[f64], u1: &[f64], r0: &mut [f64], r1: &mut [f64]) {
        if self.dim == 1 {
            self.apply_nodal_1d(u0, u1, r0, r1)
        } else {
            self.apply_nodal_generic(u0, u1, r0, r1)
        }
    }

    fn apply_nodal_generic(&self, u0: &[f64], u1: &[f64], r0: &mut [f64], r1: &mut [f64]) {
        let d = self.dim;
        let q = &self.quad;
        let nq = q.len();
        let corners = q.corners();
        let nx = self.gx.n_nodes();
        let ny = self.gy.n_nodes();
        let ney = self.gy.n_elements();
        let my = ney * nq;
        let inv_hx = 1.0 / self.gx.h();
        let inv_hy = 1.0 / self.gy.h();
        r0.iter_mut().for_each(|v| *v = 0.0);
        r1.iter_mut().for_each(|v| *v = 0.0);

        // y-gradients of u1 at y-quadrature points, per x-node
        let mut g = vec![0.0; nx * my * d];
        let mut vals = [0.0; 8];
        for i in 0..nx {
            let row = &u1[i * ny..(i + 1) * ny];
            let gi = &mut g[i * my * d..(i + 1) * my * d];
            for e in 0..ney {
                let nodes = &self.ey[e * corners..(e + 1) * corners];
                let mut any = false;
                for c in 0..corners {
                    vals[c] = row[nodes[c]];
                    any |= vals[c] != 0.0;
                }
                if !any {
                    continue;
                }
                for iq in 0..nq {
                    let base = (e * nq + iq) * d;
                    for p in 0..d {
                        let mut s = 0.0;
                        for c in 0..corners {
                            s += q.grad[(iq * corners + c) * d + p] * vals[c];
                        }
                        gi[base + p] = s * inv_hy;
                    }
                }
            }
        }

        let mut r = vec![0.0; nx * my * d];
        let mut grad = [0.0; 3];
        let mut acc0 = [0.0; 3];
        let mut flux = [0.0; 3];
        for ex in 0..self.gx.n_elements() {
            let xn = &self.ex[ex * corners..(ex + 1) * corners];
            for iqx in 0..nq {
                let sh = &q.shape[iq_range(iqx, corners)];
                let mut g0 = [0.0; 3];
                for c in 0..corners {
                    for p in 0..d {
                        g0[p] += q.grad[(iqx * corners + c) * d + p] * inv_hx * u0[xn[c]];
                    }
                }
                acc0[..d].iter_mut().for_each(|v| *v = 0.0);
                let arow = &self.aw[(ex * nq + iqx) * my..(ex * nq + iqx + 1) * my];
                for m in 0..my {
                    grad[..d].copy_from_slice(&g0[..d]);
                    for c in 0..corners {
                        let gc = &g[(xn[c] * my + m) * d..(xn[c] * my + m + 1) * d];
                        for p in 0..d {
                            grad[p] += sh[c] * gc[p];
                        }
                    }
                    let a = arow[m];
                    for p in 0..d {
                        flux[p] = a * grad[p];
                        acc0[p] += flux[p];
                    }
                    for c in 0..corners {
                        let rc = &mut r[(xn[c] * my + m) * d..(xn[c] * my + m + 1) * d];
                        for p in 0..d {
                            rc[p] += sh[c] * flux[p];
                        }
                    }
                }
                for c in 0..corners {
                    let mut s = 0.0;
                    for p in 0..d {
                        s += q.grad[(iqx * corners + c) * d + p] * acc0[p];
                    }
                    r0[xn[c]] += s * inv_hx;
                }
            }
        }

        for i in 0..nx {
            let ri = &r[i * my * d..(i + 1) * my * d];
            let out = &mut r1[i * ny..(i + 1) * ny];
            for e in 0..ney {
                let nodes = &self.ey[e * corners..(e + 1) * corners];
                for c in 0..corners {
                    let mut s = 0.0;
                    for iq in 0..nq {
                        let base = (e * nq + iq) * d;
                        for p in 0..d {
                            s += q.grad[(iq * corners + c) * d + p] * ri[base + p];
                        }
                    }
                    out[nodes[c]] += s * inv_hy;
                }
            }
        }
    }

    /// Specialization of [`TwoScaleSystem::apply_nodal`] for `D = Y = (0, 1)`, where Q1
    /// gradients are constant on each element.
    fn apply_nodal_1d(&self, u0: &[f64], u1: &[f64], r0: &mut [f64], r1: &mut [f64]) {
        let nx = self.gx.n_nodes();
        let ny = self.gy.n_nodes();
        let my = 2 * ny;
        let inv_hx = 1.0 / self.gx.h();
        let inv_hy = 1.0 / self.gy.h();
        let sh = &self.quad.shape;
        r0.iter_mut().for_each(|v| *v = 0.0);

        let mut g = vec![0.0; nx * ny];
        for i in 0..nx {
            let row = &u1[i * ny..(i + 1) * ny];
            let gi = &mut g[i * ny..(i + 1) * ny];
            for e in 0..ny - 1 {
                gi[e] = (row[e + 1] - row[e]) * inv_hy;
            }
            gi[ny - 1] = (row[0] - row[ny - 1]) * inv_hy;
        }

        let mut r = vec![0.0; nx * ny];
        for ex in 0..nx - 1 {
            let g0 = (u0[ex + 1] - u0[ex]) * inv_hx;
            let (left, right) = g.split_at(ex * ny + ny);
            let gl = &left[ex * ny..];
            let gr = &right[..ny];
            let mut acc = 0.0;
            let (rl_all, rr_all) = r.split_at_mut(ex * ny + ny);
            let rl = &mut rl_all[ex * ny..];
            let rr = &mut rr_all[..ny];
            for iqx in 0..2 {
                let n0 = sh[iqx * 2];
                let n1 = sh[iqx * 2 + 1];
                let arow = &self.aw[(ex * 2 + iqx) * my..(ex * 2 + iqx + 1) * my];
                for e in 0..ny {
                    let grad = g0 + n0 * gl[e] + n1 * gr[e];
                    let flux = (arow[2 * e] + arow[2 * e + 1]) * grad;
                    acc += flux;
                    rl[e] += n0 * flux;
                    rr[e] += n1 * flux;
                }
            }
            r0[ex] -= acc * inv_hx;
            r0[ex + 1] += acc * inv_hx;
        }

        for i in 0..nx {
            let ri = &r[i * ny..(i + 1) * ny];
            let out = &mut r1[i * ny..(i + 1) * ny];
            out[0] = (ri[ny - 1] - ri[0]) * inv_hy;
            for e in 1..ny {
                out[e] = (ri[e - 1] - ri[e]) * inv_hy;
            }
        }
    }

    /// `B(u, u)` for nodal `(u0, u1)`.
    pub fn energy(&self, u0: &[f64], u1: &[f64]) -> f64 {
        let mut r0 = vec![0.0; u0.len()];
        let mut r1 = vec![0.0; u1.len()];
        self.apply_nodal(u0, u1, &mut r0, &mut r1);
        dot(&r0, u0) + dot(&r1, u1)
    }

    fn bases_x(&self) -> Vec<&Basis1d> {
        vec![&self.hat; self.dim]
    }

    fn bases_xy(&self) -> Vec<&Basis1d> {
        let mut b = vec![&self.wav_x; self.dim];
        b.extend(core::iter::repeat_n(&self.wav_y, self.dim));
        b
    }

    /// Coefficients to nodal values.
    pub fn synthesize(&self, c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n0 = self.n_x();
        let mut u0 = c[..n0].to_vec();
        let mut u1 = c[n0..].to_vec();
        transform_nd(&mut u0, &self.bases_x(), false);
        transform_nd(&mut u1, &self.bases_xy(), false);
        (u0, u1)
    }

    fn apply_coeffs(&self, c: &[f64], out: &mut [f64]) {
        let n0 = self.n_x();
        let mut masked = c.to_vec();
        self.mask(&mut masked);
        let (u0, u1) = self.synthesize(&masked);
        let (o0, o1) = out.split_at_mut(n0);
        self.apply_nodal(&u0, &u1, o0, o1);
        transform_nd(o0, &self.bases_x(), true);
        transform_nd(o1, &self.bases_xy(), true);
        self.mask(out);
    }

    fn mask(&self, c: &mut [f64]) {
        let n0 = self.n_x();
        for (v, &a) in c[..n0].iter_mut().zip(&self.active0) {
            if !a {
                *v = 0.0;
            }
        }
        for (v, &a) in c[n0..].iter_mut().zip(&self.active1) {
            if !a {
                *v = 0.0;
            }
        }
    }

    /// Right-hand side in basis coordinates.
    pub fn rhs(&self) -> Vec<f64> {
        let n0 = self.n_x();
        let mut b = vec![0.0; n0 + n0 * self.n_y()];
        b[..n0].copy_from_slice(&self.load);
        transform_nd(&mut b[..n0], &self.bases_x(), true);
        self.mask(&mut b);
        b
    }

    /// Matrix-vector product in basis coordinates, inactive entries zeroed.
    pub fn apply(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; c.len()];
        self.apply_coeffs(c, &mut out);
        out
    }

    pub fn solve(&self) -> Result<TwoScaleSolution> {
        let b = self.rhs();
        let mut c = vec![0.0; b.len()];
        let report = pcg(
            |x, y| self.apply_coeffs(x, y),
            |r, z| {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.diag) {
                    *zi = ri * di;
                }
            },
            &b,
            &mut c,
            self.settings.cg,
        )?;
        let (u0, u1) = self.synthesize(&c);
        Ok(TwoScaleSolution {
            dim: self.dim,
            level: self.settings.level,
            space: self.settings.space,
            gx: self.gx,
            gy: self.gy,
            u0,
            u1,
            coeffs: c,
            report,
        })
    }

    /// `∫_D ∫_Y A (∂_{x_p} u0 + ∂_{y_p} u1) dy dx` with the system's quadrature.
    pub fn flux(&self, sol: &TwoScaleSolution, component: usize) -> f64 {
        let d = self.dim;
        let q = &self.quad;
        let nq = q.len();
        let corners = q.corners();
        let my = self.gy.n_elements() * nq;
        let ny = self.gy.n_nodes();
        let inv_hx = 1.0 / self.gx.h();
        let inv_hy = 1.0 / self.gy.h();
        let p = component;
        let mut total = 0.0;
        // y-gradient component p of u1 at every (x-node, y-quadrature point)
        let mut g = vec![0.0; self.gx.n_nodes() * my];
        for i in 0..self.gx.n_nodes() {
            for e in 0..self.gy.n_elements() {
                let nodes = &self.ey[e * corners..(e + 1) * corners];
                for iq in 0..nq {
                    let mut s = 0.0;
                    for c in 0..corners {
                        s += q.grad[(iq * corners + c) * d + p] * sol.u1[i * ny + nodes[c]];
                    }
                    g[i * my + e * nq + iq] = s * inv_hy;
                }
            }
        }
        for ex in 0..self.gx.n_elements() {
            let xn = &self.ex[ex * corners..(ex + 1) * corners];
            for iqx in 0..nq {
                let sh = &q.shape[iq_range(iqx, corners)];
                let mut g0 = 0.0;
                for c in 0..corners {
                    g0 += q.grad[(iqx * corners + c) * d + p] * inv_hx * sol.u0[xn[c]];
                }
                let arow = &self.aw[(ex * nq + iqx) * my..(ex * nq + iqx + 1) * my];
                for m in 0..my {
                    let mut gr = g0;
                    for c in 0..corners {
                        gr += sh[c] * g[xn[c] * my + m];
                    }
                    total += arow[m] * gr;
                }
            }
        }
        total
    }
}

#[inline]
fn iq_range(iq: usize, corners: usize) -> core::ops::Range<usize> {
    iq * corners..(iq + 1) * corners
}

/// `|∇(Π_k φ_k)|²` from per-axis squared `L^2` norms and `H^1` seminorms.
fn gradient_energy(idx: &[usize], l2: &[f64], h1: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 0..idx.len() {
        let mut t = h1[idx[k]];
        for (m, &i) in idx.iter().enumerate() {
            if m != k {
                t *= l2[i];
            }
        }
        total += t;
    }
    total
}

/// `∫_D f φ_i` for every Q1 node function, by 3-point Gauss quadrature per element.
pub fn load_vector(g: &Grid, f: &Field) -> Vec<f64> {
    let q = ElementQuadrature::gauss(g.dim, 3);
    let d = g.dim;
    let corners = q.corners();
    let en = g.element_nodes();
    let pts = g.quadrature_points(&q);
    let vol = g.h().powi(d as i32);
    let y0 = [0.0; 3];
    let mut out = vec![0.0; g.n_nodes()];
    for e in 0..g.n_elements() {
        for iq in 0..q.len() {
            let k = e * q.len() + iq;
            let fv = f.eval(&pts[k * d..(k + 1) * d], &y0[..d]) * vol * q.rule.weights[iq];
            for c in 0..corners {
                out[en[e * corners + c]] += fv * q.shape[iq * corners + c];
            }
        }
    }
    out
}

/// Galerkin solution in nodal form together with its basis coefficients.
#[derive(Debug, Clone)]
pub struct TwoScaleSolution {
    pub dim: usize,
    pub level: u32,
    pub space: SpaceKind,
    pub gx: Grid,
    pub gy: Grid,
    /// Nodal values of `u0` on the `D` grid.
    pub u0: Vec<f64>,
    /// Nodal values of `u1`, `[x_node * n_y + y_node]`.
    pub u1: Vec<f64>,
    /// Basis coefficients `[u0 | u1]`.
    pub coeffs: Vec<f64>,
    pub report: CgReport,
}

impl TwoScaleSolution {
    /// Nodal values on the grids of level `fine >= self.level`.
    pub fn prolong(&self, fine: u32) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let ratio = 1usize << (fine - self.level);
        let x_axis = Axis {
            coarse_nodes: self.gx.nodes_per_axis(),
            ratio,
            periodic: false,
        };
        let y_axis = Axis {
            coarse_nodes: self.gy.nodes_per_axis(),
            ratio,
            periodic: true,
        };
        let u0 = prolong_axes(&self.u0, &vec![x_axis; d]);
        let mut axes = vec![x_axis; d];
        axes.extend(core::iter::repeat_n(y_axis, d));
        let u1 = prolong_axes(&self.u1, &axes);
        (u0, u1)
    }

    /// `∇u0(x) + ∇_y u1(x, y)` by Q1 interpolation.
    pub fn gradient(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let (ix, tx) = locate(&self.gx, x);
        let (iy, ty) = locate(&self.gy, y);
        let nxa = self.gx.nodes_per_axis();
        let nya = self.gy.nodes_per_axis();
        let ny = self.gy.n_nodes();
        let hx = self.gx.h();
        let hy = self.gy.h();
        let corners = 1usize << d;
        out[..d].iter_mut().for_each(|v| *v = 0.0);
        for cx in 0..corners {
            let (nodex, wx, dwx) = corner_weights(&ix, &tx, cx, d, nxa, false, hx);
            out[..d].iter_mut().zip(&dwx).for_each(|(o, g)| *o += g * self.u0[nodex]);
            for cy in 0..corners {
                let (nodey, _, dwy) = corner_weights(&iy, &ty, cy, d, nya, true, hy);
                let v = self.u1[nodex * ny + nodey];
                for p in 0..d {
                    out[p] += wx * dwy[p] * v;
                }
            }
        }
    }

    /// `u0(x)` by Q1 interpolation.
    pub fn u0_at(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let (ix, tx) = locate(&self.gx, x);
        let nxa = self.gx.nodes_per_axis();
        (0..1usize << d)
            .map(|c| {
                let (node, w, _) = corner_weights(&ix, &tx, c, d, nxa, false, self.gx.h());
                w * self.u0[node]
            })
            .sum()
    }
}

/// Q1 interpolant of nodal `values` on a box grid and its gradient at `x`.
pub(crate) fn interpolate(g: &Grid, values: &[f64], x: &[f64]) -> (f64, [f64; 3]) {
    let d = g.dim;
    let (ix, tx) = locate(g, x);
    let mut grad = [0.0; 3];
    let mut val = 0.0;
    for c in 0..1usize << d {
        let (node, w, dw) = corner_weights(&ix, &tx, c, d, g.nodes_per_axis(), g.periodic, g.h());
        val += w * values[node];
        for k in 0..d {
            grad[k] += dw[k] * values[node];
        }
    }
    (val, grad)
}

pub(crate) fn nodal_gradient(g: &Grid, values: &[f64], x: &[f64]) -> [f64; 3] {
    interpolate(g, values, x).1
}

pub(crate) fn nodal_value(g: &Grid, values: &[f64], x: &[f64]) -> f64 {
    interpolate(g, values, x).0
}

/// Cell index and local coordinate in `[0, 1]` along each axis.
pub(crate) fn locate(g: &Grid, p: &[f64]) -> ([usize; 3], [f64; 3]) {
    let n = g.cells_per_axis();
    let mut idx = [0usize; 3];
    let mut t = [0.0; 3];
    for k in 0..g.dim {
        let mut s = p[k];
        if g.periodic {
            s -= s.floor();
        }
        let v = (s * n as f64).clamp(0.0, n as f64);
        let i = (v.floor() as usize).min(n - 1);
        idx[k] = i;
        t[k] = v - i as f64;
    }
    (idx, t)
}

/// Node, value and gradient of one Q1 corner function at a located point.
pub(crate) fn corner_weights(
    idx: &[usize; 3],
    t: &[f64; 3],
    c: usize,
    d: usize,
    nodes_per_axis: usize,
    periodic: bool,
    h: f64,
) -> (usize, f64, [f64; 3]) {
    let mut node = 0;
    let mut w = 1.0;
    let mut f = [0.0; 3];
    let mut dw = [0.0; 3];
    for k in 0..d {
        let up = (c >> k) & 1 == 1;
        let mut i = idx[k] + usize::from(up);
        if periodic && i == nodes_per_axis {
            i = 0;
        }
        node = node * nodes_per_axis + i;
        f[k] = if up { t[k] } else { 1.0 - t[k] };
        w *= f[k];
    }
    for k in 0..d {
        let mut g = if (c >> k) & 1 == 1 { 1.0 / h } else { -1.0 / h };
        for m in 0..d {
            if m != k {
                g *= f[m];
            }
        }
        dw[k] = g;
    }
    (node, w, dw)
}

/// Quadrature weights and Q1 data for evaluating `∫_D X(x) φ_i(x) dx` and `∫_D X ∂_p φ_i dx`.
pub(crate) fn x_moments(g: &Grid, f: impl Fn(&[f64]) -> f64) -> (Vec<f64>, Vec<f64>) {
    let d = g.dim;
    let q = ElementQuadrature::gauss(d, 3);
    let corners = q.corners();
    let en = g.element_nodes();
    let pts = g.quadrature_points(&q);
    let vol = g.h().powi(d as i32);
    let inv_h = 1.0 / g.h();
    let mut mass = vec![0.0; g.n_nodes()];
    let mut grad = vec![0.0; g.n_nodes() * d];
    for e in 0..g.n_elements() {
        for iq in 0..q.len() {
            let k = e * q.len() + iq;
            let fv = f(&pts[k * d..(k + 1) * d]) * vol * q.rule.weights[iq];
            for c in 0..corners {
                let node = en[e * corners + c];
                mass[node] += fv * q.shape[iq * corners + c];
                for p in 0..d {
                    grad[node * d + p] += fv * q.grad[(iq * corners + c) * d + p] * inv_h;
                }
            }
        }
    }
    (mass, grad)
}

impl TwoScaleSolution {
    /// `∫_D ∫_Y w(x, y) (∂_{x_p} u0 + ∂_{y_p} u1) dy dx` for a weight field `w`.
    pub fn weighted_functional(&self, weight: &Field, component: usize) -> f64 {
        let d = self.dim;
        let ny = self.gy.n_nodes();
        let mut total = 0.0;
        for term in &weight.terms {
            let (mx, gx) = x_moments(&self.gx, |x| term.x_part(x));
            let (_, gy) = x_moments(&self.gy, |y| term.y_part(y));
            let ybar = term.y_integral();
            let mut s0 = 0.0;
            for (i, u) in self.u0.iter().enumerate() {
                s0 += gx[i * d + component] * u;
            }
            let mut s1 = 0.0;
            for (i, &m) in mx.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let row = &self.u1[i * ny..(i + 1) * ny];
                let mut t = 0.0;
                for (j, u) in row.iter().enumerate() {
                    t += gy[j * d + component] * u;
                }
                s1 += m * t;
            }
            total += term.scale * (ybar * s0 + s1);
        }
        total
    }
}
