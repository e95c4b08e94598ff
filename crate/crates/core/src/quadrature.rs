//! Gauss–Legendre rules on the unit interval and their tensor products.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;


/// A one-dimensional quadrature rule on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `n`-point Gauss–Legendre rule mapped to `[0, 1]`; exact for degree `2n - 1`.
    pub fn gauss(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Rule { nodes, weights }
    }

    /// Trapezoidal rule for one period of a 1-periodic function (`n` equispaced nodes).
    pub fn periodic_trapezoid(n: usize) -> Self {
        let h = 1.0 / n as f64;
        Rule {
            nodes: (0..n).map(|i| i as f64 * h).collect(),
            weights: vec![h; n],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Composite rule: `panels` equal sub-intervals of `[a, b]`, each with a copy of `self`.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Rule {
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(panels * self.len());
        let mut weights = Vec::with_capacity(panels * self.len());
        for p in 0..panels {
            let left = a + p as f64 * h;
            for (t, w) in self.nodes.iter().zip(&self.weights) {
                nodes.push(left + t * h);
                weights.push(w * h);
            }
        }
        Rule { nodes, weights }
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn apply_on<const N: usize>(rule: &Rule, f: &mut impl FnMut(f64) -> [f64; N], a: f64, b: f64) -> [f64; N] {
    let h = b - a;
    let mut acc = [0.0; N];
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(a + t * h);
        for (s, x) in acc.iter_mut().zip(v) {
            *s += w * h * x;
        }
    }
    acc
}

/// Adaptive integration of a vector-valued integrand over `[a, b]`.
///
/// An interval is accepted once `rule` on the whole interval and on its two halves agree to
/// `tol * (b - a)` in every component, so the total error is about `tol` in absolute terms.
pub fn adaptive<const N: usize>(
    rule: &Rule,
    f: &mut impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: f64,
) -> [f64; N] {
    if b == a {
        return [0.0; N];
    }
    let whole = apply_on(rule, f, a, b);
    adaptive_step(rule, f, a, b, tol / (b - a).abs(), whole, 0)
}

fn adaptive_step<const N: usize>(
    rule: &Rule,
    f: &mut impl FnMut(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol_density: f64,
    whole: [f64; N],
    depth: u32,
) -> [f64; N] {
    let m = 0.5 * (a + b);
    let left = apply_on(rule, f, a, m);
    let right = apply_on(rule, f, m, b);
    let mut out = [0.0; N];
    let mut ok = true;
    for k in 0..N {
        out[k] = left[k] + right[k];
        // the relative floor stops refinement once the rules agree to rounding
        ok &= (out[k] - whole[k]).abs() <= tol_density * (b - a).abs() + 1e-14 * out[k].abs();
    }
    if ok || depth >= 30 {
        return out;
    }
    let l = adaptive_step(rule, f, a, m, tol_density, left, depth + 1);
    let r = adaptive_step(rule, f, m, b, tol_density, right, depth + 1);
    for k in 0..N {
        out[k] = l[k] + r[k];
    }
    out
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule on the reference cube `[0,1]^dim`, points in lexicographic order
/// with the last axis varying fastest.
#[derive(Debug, Clone)]
pub struct TensorRule {
    pub dim: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TensorRule {
    pub fn new(dim: usize, rule: &Rule) -> Self {
        assert!((1..=3).contains(&dim));
        let n = rule.len();
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for flat in 0..total {
            let mut p = [0.0; 3];
            let mut w = 1.0;
            let mut rem = flat;
            for axis in (0..dim).rev() {
                let i = rem % n;
                rem /= n;
                p[axis] = rule.nodes[i];
                w *= rule.weights[i];
            }
            points.push(p);
            weights.push(w);
        }
        TensorRule {
            dim,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adaptive_resolves_a_peak() {
        let rule = Rule::gauss(7);
        let mut f = |x: f64| [1.0 / (1e-4 + (x - 0.3) * (x - 0.3)), x];
        let v = adaptive(&rule, &mut f, 0.0, 1.0, 1e-10);
        let exact = 100.0 * ((0.7f64 / 0.01).atan() + (0.3f64 / 0.01).atan());
        assert!((v[0] - exact).abs() < 1e-8, "{} {}", v[0], exact);
        assert!((v[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauss_rules_integrate_polynomials_exactly() {
        for n in 1..=12 {
            let rule = Rule::gauss(n);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..(2 * n) {
                let exact = 1.0 / (p as f64 + 1.0);
                let got = rule.integrate(|x| x.powi(p as i32));
                assert!((got - exact).abs() < 1e-13, "n={n} p={p}: {got} vs {exact}");
            }
        }
    }

    #[test]
    fn periodic_trapezoid_is_spectral_for_trig() {
        let rule = Rule::periodic_trapezoid(32);
        let got = rule.integrate(|y| 1.0 / (9.0 + (2.0 * PI * y).sin()));
        assert!((got - 1.0 / 80f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn tensor_rule_weights_sum_to_one() {
        let t = TensorRule::new(2, &Rule::gauss(3));
        assert_eq!(t.len(), 9);
        assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let got: f64 = t
            .points
            .iter()
            .zip(&t.weights)
            .map(|(p, w)| w * p[0] * p[0] * p[1])
            .sum();
        assert!((got - 1.0 / 6.0).abs() < 1e-14);
    }
}
