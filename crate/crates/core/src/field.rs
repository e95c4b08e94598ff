//! Closed-form separable functions of `(x, y)` used for coefficients, sources and
//! observation weights.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;


use crate::error::{invalid, Result};

const TWO_PI: f64 = 2.0 * PI;

/// A scalar function of a single coordinate `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    One,
    /// `c0 + c1 t`
    Affine { c0: f64, c1: f64 },
    /// `t^p`
    Power(u32),
    /// `sin(2πkt)`
    Sin(u32),
    /// `cos(2πkt)`
    Cos(u32),
    /// `1 + sin(2πkt)`
    OnePlusSin(u32),
    /// `1 + cos(2πkt)`
    OnePlusCos(u32),
    /// Smoothed periodic indicator of `[1/2, 1)`; the jumps are tanh fronts of the given width.
    Laminate { width: f64 },
}

fn smooth_step(t: f64, width: f64) -> f64 {
    0.5 * (1.0 + (t / width).tanh())
}

fn smooth_step_dt(t: f64, width: f64) -> f64 {
    let c = (t / width).cosh();
    0.5 / (width * c * c)
}

impl Factor {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Factor::One => 1.0,
            Factor::Affine { c0, c1 } => c0 + c1 * t,
            Factor::Power(p) => t.powi(p as i32),
            Factor::Sin(k) => (TWO_PI * k as f64 * t).sin(),
            Factor::Cos(k) => (TWO_PI * k as f64 * t).cos(),
            Factor::OnePlusSin(k) => 1.0 + (TWO_PI * k as f64 * t).sin(),
            Factor::OnePlusCos(k) => 1.0 + (TWO_PI * k as f64 * t).cos(),
            Factor::Laminate { width } => {
                let s = t - t.floor();
                smooth_step(s - 0.5, width) - smooth_step(s - 1.0, width) + 1.0
                    - smooth_step(s, width)
            }
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            Factor::One => 0.0,
            Factor::Affine { c1, .. } => c1,
            Factor::Power(0) => 0.0,
            Factor::Power(p) => p as f64 * t.powi(p as i32 - 1),
            Factor::Sin(k) | Factor::OnePlusSin(k) => {
                let w = TWO_PI * k as f64;
                w * (w * t).cos()
            }
            Factor::Cos(k) | Factor::OnePlusCos(k) => {
                let w = TWO_PI * k as f64;
                -w * (w * t).sin()
            }
            Factor::Laminate { width } => {
                let s = t - t.floor();
                smooth_step_dt(s - 0.5, width) - smooth_step_dt(s - 1.0, width)
                    - smooth_step_dt(s, width)
            }
        }
    }

    /// `sup |f|` over `[0, 1]`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            Factor::One => 1.0,
            Factor::Affine { c0, c1 } => c0.abs().max((c0 + c1).abs()),
            Factor::Power(_) => 1.0,
            Factor::Sin(0) => 0.0,
            Factor::Sin(_) | Factor::Cos(_) => 1.0,
            Factor::OnePlusSin(0) => 1.0,
            Factor::OnePlusSin(_) | Factor::OnePlusCos(_) => 2.0,
            Factor::Laminate { .. } => sampled_sup(|t| self.eval(t)),
        }
    }

    /// `sup |f^{(order)}|` over `[0, 1]` for `order <= 2`.
    pub fn sup_abs_derivative(&self, order: u32) -> f64 {
        if order == 0 {
            return self.sup_abs();
        }
        match *self {
            Factor::One => 0.0,
            Factor::Affine { c1, .. } => {
                if order == 1 {
                    c1.abs()
                } else {
                    0.0
                }
            }
            Factor::Power(p) => {
                // t^p on [0,1]: derivatives are monotone and peak at t = 1
                let mut c = 1.0;
                for i in 0..order {
                    if p < i + 1 {
                        return 0.0;
                    }
                    c *= (p - i) as f64;
                }
                c
            }
            Factor::Sin(k) | Factor::Cos(k) | Factor::OnePlusSin(k) | Factor::OnePlusCos(k) => {
                (TWO_PI * k as f64).powi(order as i32)
            }
            Factor::Laminate { width } => {
                if order == 1 {
                    sampled_sup(|t| self.derivative(t))
                } else {
                    // second derivative of the tanh front peaks at 4/(3√3 w²)
                    4.0 / (3.0 * 3f64.sqrt() * width * width)
                }
            }
        }
    }

    /// Antiderivative vanishing at `t = 0`, when available in closed form.
    pub fn antiderivative(&self, t: f64) -> Option<f64> {
        let w = |k: u32| TWO_PI * k as f64;
        Some(match *self {
            Factor::One => t,
            Factor::Affine { c0, c1 } => c0 * t + 0.5 * c1 * t * t,
            Factor::Power(p) => t.powi(p as i32 + 1) / (p as f64 + 1.0),
            Factor::Sin(0) => 0.0,
            Factor::Cos(0) => t,
            Factor::Sin(k) => (1.0 - (w(k) * t).cos()) / w(k),
            Factor::Cos(k) => (w(k) * t).sin() / w(k),
            Factor::OnePlusSin(0) => t,
            Factor::OnePlusCos(0) => 2.0 * t,
            Factor::OnePlusSin(k) => t + (1.0 - (w(k) * t).cos()) / w(k),
            Factor::OnePlusCos(k) => t + (w(k) * t).sin() / w(k),
            Factor::Laminate { .. } => return None,
        })
    }

    /// `∫_0^1 f`.
    pub fn unit_integral(&self) -> f64 {
        match self.antiderivative(1.0) {
            Some(v) => v,
            None => {
                let rule = crate::quadrature::Rule::gauss(8).composite(0.0, 1.0, 256);
                rule.integrate(|t| self.eval(t))
            }
        }
    }

    /// Whether the factor is 1-periodic (required for every `y` factor).
    pub fn is_periodic(&self) -> bool {
        match *self {
            Factor::Affine { c1, .. } => c1 == 0.0,
            Factor::Power(p) => p == 0,
            _ => true,
        }
    }
}

fn sampled_sup(f: impl Fn(f64) -> f64) -> f64 {
    let n = 4096;
    (0..=n)
        .map(|i| f(i as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

/// `scale · Π_k f_k(x_k) · Π_k g_k(y_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableProduct {
    pub scale: f64,
    pub x: Vec<Factor>,
    pub y: Vec<Factor>,
}

impl SeparableProduct {
    pub fn new(scale: f64, x: Vec<Factor>, y: Vec<Factor>) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() || x.len() > 3 {
            return Err(invalid("product needs matching x/y factor lists of length 1..=3"));
        }
        if y.iter().any(|f| !f.is_periodic()) {
            return Err(invalid("y factors must be 1-periodic"));
        }
        Ok(SeparableProduct { scale, x, y })
    }

    /// A function of `x` alone (all `y` factors are one).
    pub fn macroscopic(scale: f64, x: Vec<Factor>) -> Self {
        let y = vec![Factor::One; x.len()];
        SeparableProduct { scale, x, y }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        SeparableProduct {
            scale: value,
            x: vec![Factor::One; dim],
            y: vec![Factor::One; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn x_part(&self, x: &[f64]) -> f64 {
        self.x.iter().zip(x).map(|(f, &t)| f.eval(t)).product()
    }

    #[inline]
    pub fn y_part(&self, y: &[f64]) -> f64 {
        self.y.iter().zip(y).map(|(f, &t)| f.eval(t)).product()
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.scale * self.x_part(x) * self.y_part(y)
    }

    pub fn sup_abs(&self) -> f64 {
        self.scale.abs()
            * self.x.iter().map(Factor::sup_abs).product::<f64>()
            * self.y.iter().map(Factor::sup_abs).product::<f64>()
    }

    /// Max over `|α₀| ≤ 1`, `|α₁| ≤ 2` of `sup |∂_x^{α₀} ∂_y^{α₁} f|`.
    pub fn c11_norm(&self) -> f64 {
        let d = self.dim();
        let mut best = 0.0f64;
        let mut x_orders = vec![vec![0u32; d]];
        for k in 0..d {
            let mut o = vec![0u32; d];
            o[k] = 1;
            x_orders.push(o);
        }
        let mut y_orders = vec![vec![0u32; d]];
        for k in 0..d {
            let mut o = vec![0u32; d];
            o[k] = 1;
            y_orders.push(o.clone());
            o[k] = 2;
            y_orders.push(o);
            for m in k + 1..d {
                let mut o = vec![0u32; d];
                o[k] = 1;
                o[m] = 1;
                y_orders.push(o);
            }
        }
        for xo in &x_orders {
            let xs: f64 = self
                .x
                .iter()
                .zip(xo)
                .map(|(f, &o)| f.sup_abs_derivative(o))
                .product();
            for yo in &y_orders {
                let ys: f64 = self
                    .y
                    .iter()
                    .zip(yo)
                    .map(|(f, &o)| f.sup_abs_derivative(o))
                    .product();
                best = best.max(self.scale.abs() * xs * ys);
            }
        }
        best
    }

    /// `∫_Y` of the `y` part.
    pub fn y_integral(&self) -> f64 {
        self.y.iter().map(Factor::unit_integral).product()
    }

    pub fn depends_on_y(&self) -> bool {
        self.y.iter().any(|f| *f != Factor::One)
    }
}

/// Finite sum of separable products.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    dim: usize,
    pub terms: Vec<SeparableProduct>,
}

impl Field {
    pub fn new(dim: usize, terms: Vec<SeparableProduct>) -> Result<Self> {
        if !(1..=3).contains(&dim) || terms.iter().any(|t| t.dim() != dim) {
            return Err(invalid("field terms must share the field dimension"));
        }
        Ok(Field { dim, terms })
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Field {
            dim,
            terms: vec![SeparableProduct::constant(dim, value)],
        }
    }

    pub fn zero(dim: usize) -> Self {
        Field {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn single(term: SeparableProduct) -> Self {
        Field {
            dim: term.dim(),
            terms: vec![term],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x, y)).sum()
    }

    pub fn depends_on_y(&self) -> bool {
        self.terms.iter().any(SeparableProduct::depends_on_y)
    }

    /// Closed-form antiderivative in one dimension (`F(0) = 0`), for macroscopic 1D fields.
    pub fn antiderivative_1d(&self, t: f64) -> Option<f64> {
        if self.dim != 1 || self.depends_on_y() {
            return None;
        }
        let mut acc = 0.0;
        for term in &self.terms {
            acc += term.scale * term.x[0].antiderivative(t)?;
        }
        Some(acc)
    }

    /// Inf and sup over a grid of `points_per_axis` equispaced nodes per axis of `[0,1]^{2d}`.
    pub fn sampled_range(&self, points_per_axis: usize) -> (f64, f64) {
        if self.terms.is_empty() {
            return (0.0, 0.0);
        }
        let d = self.dim;
        let n = points_per_axis.max(2);
        let t: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        // separable tables per term and axis point
        let total_x = n.pow(d as u32);
        let mut x_vals = vec![0.0; total_x * self.terms.len()];
        let mut y_vals = vec![0.0; total_x * self.terms.len()];
        let mut p = [0.0; 3];
        for flat in 0..total_x {
            let mut rem = flat;
            for axis in (0..d).rev() {
                p[axis] = t[rem % n];
                rem /= n;
            }
            for (j, term) in self.terms.iter().enumerate() {
                x_vals[flat * self.terms.len() + j] = term.scale * term.x_part(&p[..d]);
                y_vals[flat * self.terms.len() + j] = term.y_part(&p[..d]);
            }
        }
        let m = self.terms.len();
        if m == 1 {
            // a single product attains its extremes at extremes of the two factors
            let ext = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let ((xl, xh), (yl, yh)) = (ext(&x_vals), ext(&y_vals));
            let p = [xl * yl, xl * yh, xh * yl, xh * yh];
            return ext(&p);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for ix in 0..total_x {
            let xr = &x_vals[ix * m..(ix + 1) * m];
            for iy in 0..total_x {
                let yr = &y_vals[iy * m..(iy + 1) * m];
                let v: f64 = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}
