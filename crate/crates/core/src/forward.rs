//! Parameter-to-observation maps `z ↦ G(z)` used by the samplers.
//!
//! In one dimension both the limit and the oscillating problem reduce to
//! `∫ ℓ (C - F) / A` over a fixed point set with `C = ∫ F / A ÷ ∫ 1 / A`: the limit uses a
//! tensor rule on `D × Y`, finite ε uses a Gauss rule on every ε-cell with `y = x / ε`.
//! Coefficient values are affine in `z` before the link, so every term is tabulated once.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use crate::cell::{homogenized_tensor, solve_cell_problems};
use crate::coefficient::{CoefficientKind, TwoScaleCoefficient};
use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::fine_scale::source_primitive;
use crate::homogenized::{solve_homogenized, X_PANELS, X_POINTS, Y_POINTS};
use crate::linalg::CgOptions;
use crate::mesh::Grid;
use crate::observation::{forward_map_homogenized, CellObservable, Functional, ObservationMode, ObservationSpec, TwoScaleFe};
use crate::quadrature::Rule;
use crate::two_scale::{TwoScaleSettings, TwoScaleSystem};

pub trait ForwardModel {
    fn n_obs(&self) -> usize;
    fn n_params(&self) -> usize;
    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>>;
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn n_obs(&self) -> usize {
        (**self).n_obs()
    }
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        (**self).evaluate(z)
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for Box<M> {
    fn n_obs(&self) -> usize {
        (**self).n_obs()
    }
    fn n_params(&self) -> usize {
        (**self).n_params()
    }
    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        (**self).evaluate(z)
    }
}

/// A forward map given by a closure.
pub struct FnModel<F> {
    pub n_obs: usize,
    pub n_params: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> ForwardModel for FnModel<F> {
    fn n_obs(&self) -> usize {
        self.n_obs
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        (self.f)(z)
    }
}

/// Mean, expansion terms and offset of a coefficient at a fixed list of `(x, y)` points.
#[derive(Debug, Clone)]
pub struct AffineTable {
    mean: Vec<f64>,
    /// `[j * n + k]`
    psi: Vec<f64>,
    offset: Option<Vec<f64>>,
    n: usize,
}

impl AffineTable {
    /// `points` holds `2 * dim` coordinates per entry: `x` then `y`.
    pub fn new(coeff: &TwoScaleCoefficient, points: &[f64]) -> Self {
        let d = coeff.dim();
        let n = points.len() / (2 * d);
        let pts = |k: usize| (&points[2 * d * k..2 * d * k + d], &points[2 * d * k + d..2 * d * (k + 1)]);
        let mean = (0..n).map(|k| { let (x, y) = pts(k); coeff.mean.eval(x, y) }).collect();
        let mut psi = Vec::with_capacity(n * coeff.n_terms());
        for t in &coeff.terms {
            psi.extend((0..n).map(|k| {
                let (x, y) = pts(k);
                t.psi.eval(x, y)
            }));
        }
        let offset = match &coeff.kind {
            CoefficientKind::Uniform { .. } => None,
            CoefficientKind::LogGaussian { offset } => Some(
                (0..n)
                    .map(|k| {
                        let (x, y) = pts(k);
                        offset.eval(x, y)
                    })
                    .collect(),
            ),
        };
        AffineTable { mean, psi, offset, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `A(z; x_k, y_k)` for every point.
    pub fn values(&self, z: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.mean);
        for (j, &zj) in z.iter().enumerate() {
            if zj == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(&self.psi[j * self.n..(j + 1) * self.n]) {
                *o += zj * p;
            }
        }
        if let Some(off) = &self.offset {
            for (o, c) in out.iter_mut().zip(off) {
                *o = c + o.exp();
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Row {
    Weighted(Vec<f64>),
    Flux(f64),
}

/// One-dimensional forward map on a fixed point set.
#[derive(Debug, Clone)]
pub struct Quadrature1dModel {
    n_params: usize,
    table: AffineTable,
    weights: Vec<f64>,
    primitive: Vec<f64>,
    /// `∫ F` over `D`.
    mean_primitive: f64,
    rows: Vec<Row>,
}

impl Quadrature1dModel {
    /// The two-scale limit `G⁰` (homogenized solution plus corrector), accurate to the
    /// rounding level for smooth periodic coefficients.
    pub fn homogenized(coeff: &TwoScaleCoefficient, source: &Field, spec: &ObservationSpec) -> Result<Self> {
        if spec.mode == ObservationMode::TwoScaleEps {
            return Err(Error::ModeMismatch("the limit model needs a limit observation mode".into()));
        }
        let x_rule = Rule::gauss(X_POINTS).composite(0.0, 1.0, X_PANELS);
        let mut points = Vec::with_capacity(2 * x_rule.nodes.len() * Y_POINTS);
        let mut weights = Vec::with_capacity(x_rule.nodes.len() * Y_POINTS);
        for (&x, &w) in x_rule.nodes.iter().zip(&x_rule.weights) {
            for j in 0..Y_POINTS {
                points.push(x);
                points.push(j as f64 / Y_POINTS as f64);
                weights.push(w / Y_POINTS as f64);
            }
        }
        Self::build(coeff, source, spec, points, weights)
    }

    /// The oscillating problem at `ε = 1 / cells`, `panels` Gauss panels of `points` nodes
    /// per ε-cell.
    pub fn epsilon(
        coeff: &TwoScaleCoefficient,
        source: &Field,
        spec: &ObservationSpec,
        eps: f64,
        panels: usize,
        points: usize,
    ) -> Result<Self> {
        if spec.mode == ObservationMode::HomogenizedCorrector {
            return Err(Error::ModeMismatch("the ε model needs the two_scale_eps mode".into()));
        }
        let inv = 1.0 / eps;
        if !(eps > 0.0 && eps <= 1.0) || (inv - inv.round()).abs() > 1e-9 * inv {
            return Err(invalid("1/epsilon must be a positive integer"));
        }
        let rule = Rule::gauss(points).composite(0.0, 1.0, inv.round() as usize * panels);
        let mut pts = Vec::with_capacity(2 * rule.nodes.len());
        for &x in &rule.nodes {
            pts.push(x);
            pts.push(x / eps);
        }
        Self::build(coeff, source, spec, pts, rule.weights)
    }

    fn build(
        coeff: &TwoScaleCoefficient,
        source: &Field,
        spec: &ObservationSpec,
        points: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if coeff.dim() != 1 || source.dim() != 1 || source.depends_on_y() {
            return Err(invalid("one-dimensional coefficient and macroscopic source required"));
        }
        spec.check_dim(1)?;
        let primitive: Vec<f64> = points.chunks(2).map(|p| source_primitive(source, p[0])).collect();
        let mean_primitive = weights.iter().zip(&primitive).map(|(w, f)| w * f).sum();
        let rows = spec
            .functionals
            .iter()
            .map(|f| match f {
                Functional::Weighted { weight, .. } => {
                    Row::Weighted(points.chunks(2).map(|p| weight.eval(&p[..1], &p[1..])).collect())
                }
                Functional::Flux { scale, .. } => Row::Flux(*scale),
            })
            .collect();
        Ok(Quadrature1dModel {
            n_params: coeff.n_terms(),
            table: AffineTable::new(coeff, &points),
            weights,
            primitive,
            mean_primitive,
            rows,
        })
    }

    pub fn n_points(&self) -> usize {
        self.weights.len()
    }
}

impl ForwardModel for Quadrature1dModel {
    fn n_obs(&self) -> usize {
        self.rows.len()
    }

    fn n_params(&self) -> usize {
        self.n_params
    }

    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                found: z.len(),
            });
        }
        let mut inv = vec![0.0; self.n_points()];
        self.table.values(z, &mut inv);
        let mut min = f64::INFINITY;
        for v in inv.iter_mut() {
            min = min.min(*v);
            *v = 1.0 / *v;
        }
        if !(min > 0.0) {
            return Err(if min.is_finite() {
                Error::NotCoercive { min }
            } else {
                Error::NonFinite("coefficient")
            });
        }
        let mut i0 = 0.0;
        let mut i1 = 0.0;
        for ((w, r), f) in self.weights.iter().zip(&inv).zip(&self.primitive) {
            i0 += w * r;
            i1 += w * r * f;
        }
        let c = i1 / i0;
        // gradient times quadrature weight
        let g: Vec<f64> = self
            .weights
            .iter()
            .zip(&inv)
            .zip(&self.primitive)
            .map(|((w, r), f)| w * r * (c - f))
            .collect();
        let out: Vec<f64> = self
            .rows
            .iter()
            .map(|row| match row {
                Row::Weighted(l) => l.iter().zip(&g).map(|(a, b)| a * b).sum(),
                Row::Flux(scale) => scale * (c - self.mean_primitive),
            })
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward map"));
        }
        Ok(out)
    }
}

/// `G^{0,L}`: the two-scale Galerkin solution in the full or sparse tensor space.
#[derive(Debug, Clone)]
pub struct TwoScaleFeModel {
    pub coeff: TwoScaleCoefficient,
    pub source: Field,
    pub spec: ObservationSpec,
    pub settings: TwoScaleSettings,
}

impl TwoScaleFeModel {
    pub fn new(coeff: TwoScaleCoefficient, source: Field, spec: ObservationSpec, settings: TwoScaleSettings) -> Result<Self> {
        spec.check_dim(coeff.dim())?;
        if spec.mode == ObservationMode::TwoScaleEps {
            return Err(Error::ModeMismatch("the Galerkin model needs a limit observation mode".into()));
        }
        Ok(TwoScaleFeModel {
            coeff,
            source,
            spec,
            settings,
        })
    }
}

impl ForwardModel for TwoScaleFeModel {
    fn n_obs(&self) -> usize {
        self.spec.len()
    }

    fn n_params(&self) -> usize {
        self.coeff.n_terms()
    }

    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        let system = TwoScaleSystem::assemble(&self.coeff, z, &self.source, self.settings)?;
        let solution = system.solve()?;
        forward_map_homogenized(
            &self.spec,
            &TwoScaleFe {
                system: &system,
                solution: &solution,
            },
        )
    }
}

/// `G⁰` through cell problems at the nodes of a macroscopic grid and a separate solve for
/// `u0`.
#[derive(Debug, Clone)]
pub struct CellRouteModel {
    pub coeff: TwoScaleCoefficient,
    pub source: Field,
    pub spec: ObservationSpec,
    pub macro_level: u32,
    pub cell_level: u32,
    pub homogenized_level: u32,
    pub cg: CgOptions,
}

impl CellRouteModel {
    pub fn new(
        coeff: TwoScaleCoefficient,
        source: Field,
        spec: ObservationSpec,
        macro_level: u32,
        cell_level: u32,
        homogenized_level: u32,
    ) -> Result<Self> {
        spec.check_dim(coeff.dim())?;
        if spec.mode == ObservationMode::TwoScaleEps {
            return Err(Error::ModeMismatch("the cell route needs a limit observation mode".into()));
        }
        if macro_level < 1 || cell_level < 2 || homogenized_level < 1 {
            return Err(invalid("grid levels too small"));
        }
        Ok(CellRouteModel {
            coeff,
            source,
            spec,
            macro_level,
            cell_level,
            homogenized_level,
            cg: CgOptions::default(),
        })
    }
}

impl ForwardModel for CellRouteModel {
    fn n_obs(&self) -> usize {
        self.spec.len()
    }

    fn n_params(&self) -> usize {
        self.coeff.n_terms()
    }

    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.coeff.dim();
        let cells = solve_cell_problems(&self.coeff, z, Grid::boxed(d, self.macro_level), self.cell_level, self.cg)?;
        let tensor = homogenized_tensor(&self.coeff, z, &cells)?;
        let homogenized = solve_homogenized(&tensor, &self.source, self.homogenized_level, self.cg)?;
        forward_map_homogenized(
            &self.spec,
            &CellObservable {
                homogenized: &homogenized,
                cells: &cells,
                tensor: &tensor,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Factor, SeparableProduct};
    use crate::fine_scale::{solve_eps_1d_exact, EpsilonProblem};
    use crate::homogenized::solve_homogenized_1d;
    use crate::observation::forward_map_eps;

    fn family() -> TwoScaleCoefficient {
        let lin = Factor::Affine { c0: 1.0, c1: 1.0 };
        TwoScaleCoefficient::uniform(
            Field::constant(1, 9.0),
            vec![
                SeparableProduct::new(1.0, vec![lin], vec![Factor::Sin(1)]).unwrap(),
                SeparableProduct::new(1.0, vec![lin], vec![Factor::Cos(1)]).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    fn functionals() -> Vec<Functional> {
        let w = |y: Factor| {
            Field::single(SeparableProduct::new(1.0, vec![Factor::Power(1)], vec![y]).unwrap())
        };
        vec![
            Functional::Weighted { weight: w(Factor::One), component: 0 },
            Functional::Weighted { weight: w(Factor::Sin(1)), component: 0 },
            Functional::Flux { component: 0, scale: 1.0 },
        ]
    }

    #[test]
    fn limit_model_matches_closed_form_route() {
        let c = family();
        let f = Field::constant(1, 1.0);
        let spec = ObservationSpec::new(functionals(), ObservationMode::TwoScaleEps).unwrap();
        let lim = spec.with_mode(ObservationMode::Flux);
        assert!(lim.is_err());
        let spec = ObservationSpec::new(functionals()[..2].to_vec(), ObservationMode::HomogenizedCorrector).unwrap();
        let model = Quadrature1dModel::homogenized(&c, &f, &spec).unwrap();
        let z = [0.7, -0.4];
        let g = model.evaluate(&z).unwrap();
        let sol = solve_homogenized_1d(&c, &z, &f).unwrap();
        let h = forward_map_homogenized(&spec, &sol).unwrap();
        for (a, b) in g.iter().zip(&h) {
            assert!((a - b).abs() < 1e-13, "{a} {b}");
        }
    }

    #[test]
    fn epsilon_model_matches_adaptive_solver() {
        let c = family();
        let f = Field::constant(1, 1.0);
        let spec = ObservationSpec::new(functionals(), ObservationMode::TwoScaleEps).unwrap();
        let z = [0.7, -0.4];
        for eps in [0.125, 1.0 / 32.0] {
            let model = Quadrature1dModel::epsilon(&c, &f, &spec, eps, 4, 8).unwrap();
            let g = model.evaluate(&z).unwrap();
            let p = EpsilonProblem::new(&c, &z, eps, &f, 16).unwrap();
            let exact = solve_eps_1d_exact(p).unwrap();
            let h = forward_map_eps(&spec, &exact).unwrap();
            for (a, b) in g.iter().zip(&h) {
                assert!((a - b).abs() < 1e-9, "{a} {b}");
            }
        }
    }

    #[test]
    fn log_gaussian_table_applies_the_link() {
        let coeff = TwoScaleCoefficient::log_gaussian(
            Field::constant(1, 0.5),
            Field::constant(1, 1.0),
            vec![SeparableProduct::new(1.0, vec![Factor::One], vec![Factor::Cos(1)]).unwrap()],
        )
        .unwrap();
        let pts = [0.3, 0.1, 0.8, 0.6];
        let t = AffineTable::new(&coeff, &pts);
        let mut out = [0.0; 2];
        t.values(&[0.4], &mut out);
        for k in 0..2 {
            let direct = coeff.eval_unchecked(&[0.4], &pts[2 * k..2 * k + 1], &pts[2 * k + 1..2 * k + 2]);
            assert!((out[k] - direct).abs() < 1e-14);
        }
    }
}
