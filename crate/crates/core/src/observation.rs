//! Observation functionals, Gaussian noise, misfit potentials and synthetic data.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cell::{CellSolutionSet, HomogenizedTensorField};
use crate::error::{invalid, Error, Result};
use crate::field::Field;
use crate::fine_scale::{EpsFem, EpsilonProblem, ExactEps1d};
use crate::homogenized::{Homogenized1d, HomogenizedSolution};
use crate::linalg::Cholesky;
use crate::mesh::ElementQuadrature;
use crate::two_scale::{interpolate, x_moments, TwoScaleSolution, TwoScaleSystem};

/// A bounded linear functional of the gradient of the solution.
#[derive(Debug, Clone, PartialEq)]
pub enum Functional {
    /// `∫∫ w(x, y) ∂_p u dy dx`, with `∂_p u = ∂_{x_p} u0 + ∂_{y_p} u1` in the limit and
    /// `∂_p u^ε` (with `y = x/ε`) at finite ε.
    Weighted { weight: Field, component: usize },
    /// `scale · ∫∫ A ∂_p u dy dx`.
    Flux { component: usize, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationMode {
    /// Functionals of the oscillating solution `u^ε`.
    TwoScaleEps,
    /// Weighted functionals of the two-scale limit `(u0, u1)`.
    HomogenizedCorrector,
    /// Flux functionals of the two-scale limit.
    Flux,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    pub functionals: Vec<Functional>,
    pub mode: ObservationMode,
}

impl ObservationSpec {
    pub fn new(functionals: Vec<Functional>, mode: ObservationMode) -> Result<Self> {
        if functionals.is_empty() {
            return Err(invalid("at least one observation is required"));
        }
        for f in &functionals {
            match f {
                Functional::Weighted { weight, .. } => {
                    if mode == ObservationMode::Flux {
                        return Err(Error::ModeMismatch("weighted functional in flux mode".to_string()));
                    }
                    let periodic = weight
                        .terms
                        .iter()
                        .all(|t| t.y.iter().all(|f| f.is_periodic()));
                    if !periodic {
                        return Err(invalid("observation weights must be Y-periodic"));
                    }
                }
                Functional::Flux { .. } => {
                    if mode == ObservationMode::HomogenizedCorrector {
                        return Err(Error::ModeMismatch(
                            "flux functional in homogenized_corrector mode".to_string(),
                        ));
                    }
                }
            }
        }
        Ok(ObservationSpec { functionals, mode })
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// The same functionals observed through another solution type.
    pub fn with_mode(&self, mode: ObservationMode) -> Result<Self> {
        Self::new(self.functionals.clone(), mode)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for f in &self.functionals {
            let (component, wdim) = match f {
                Functional::Weighted { weight, component } => (*component, weight.dim()),
                Functional::Flux { component, .. } => (*component, dim),
            };
            if component >= dim || wdim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: wdim.max(component + 1),
                });
            }
        }
        Ok(())
    }
}

/// Anything the limit functionals `O⁰_i` can be evaluated on.
pub trait LimitObservable {
    fn dim(&self) -> usize;
    fn weighted(&self, weight: &Field, component: usize) -> f64;
    /// `∫_D ∫_Y A (∂_{x_p} u0 + ∂_{y_p} u1) dy dx`.
    fn flux(&self, component: usize) -> f64;
}

/// Anything the finite-ε functionals `O^ε_i` can be evaluated on.
pub trait EpsObservable {
    fn dim(&self) -> usize;
    fn weighted(&self, weight: &Field, component: usize) -> f64;
    fn flux(&self, component: usize) -> f64;
}

pub fn forward_map_homogenized(spec: &ObservationSpec, sol: &impl LimitObservable) -> Result<Vec<f64>> {
    if spec.mode == ObservationMode::TwoScaleEps {
        return Err(Error::ModeMismatch("limit solution observed in two_scale_eps mode".to_string()));
    }
    spec.check_dim(sol.dim())?;
    Ok(spec
        .functionals
        .iter()
        .map(|f| match f {
            Functional::Weighted { weight, component } => sol.weighted(weight, *component),
            Functional::Flux { component, scale } => scale * sol.flux(*component),
        })
        .collect())
}

pub fn forward_map_eps(spec: &ObservationSpec, sol: &impl EpsObservable) -> Result<Vec<f64>> {
    if spec.mode == ObservationMode::HomogenizedCorrector {
        return Err(Error::ModeMismatch(
            "oscillating solution observed in homogenized_corrector mode".to_string(),
        ));
    }
    spec.check_dim(sol.dim())?;
    Ok(spec
        .functionals
        .iter()
        .map(|f| match f {
            Functional::Weighted { weight, component } => sol.weighted(weight, *component),
            Functional::Flux { component, scale } => scale * sol.flux(*component),
        })
        .collect())
}

impl LimitObservable for Homogenized1d<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn weighted(&self, weight: &Field, _component: usize) -> f64 {
        self.weighted_functional(weight)
    }

    fn flux(&self, _component: usize) -> f64 {
        self.flux_functional()
    }
}

/// A solved two-scale Galerkin system.
#[derive(Debug, Clone, Copy)]
pub struct TwoScaleFe<'a> {
    pub system: &'a TwoScaleSystem,
    pub solution: &'a TwoScaleSolution,
}

impl LimitObservable for TwoScaleFe<'_> {
    fn dim(&self) -> usize {
        self.solution.dim
    }

    fn weighted(&self, weight: &Field, component: usize) -> f64 {
        self.solution.weighted_functional(weight, component)
    }

    fn flux(&self, component: usize) -> f64 {
        self.system.flux(self.solution, component)
    }
}

/// Homogenized solution with cell solutions and the homogenized tensor.
#[derive(Debug, Clone, Copy)]
pub struct CellObservable<'a> {
    pub homogenized: &'a HomogenizedSolution,
    pub cells: &'a CellSolutionSet,
    pub tensor: &'a HomogenizedTensorField,
}

impl CellObservable<'_> {
    /// `M[node][p][l] = ∫_Y g(y) ∂_{y_p} w^l(x_node, y) dy` at every macroscopic node.
    fn moments(&self, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let d = self.cells.dim();
        let (_, grad) = x_moments(&self.cells.cell_grid, g);
        let n_macro = self.cells.macro_grid.n_nodes();
        let mut out = vec![0.0; n_macro * d * d];
        for node in 0..n_macro {
            for l in 0..d {
                let w = self.cells.cell_solution(node, l);
                for p in 0..d {
                    let s: f64 = w.iter().enumerate().map(|(j, v)| grad[j * d + p] * v).sum();
                    out[(node * d + p) * d + l] = s;
                }
            }
        }
        out
    }

    fn integrate_d(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        let g = &self.homogenized.grid;
        let d = g.dim;
        let q = ElementQuadrature::gauss(d, 3);
        let pts = g.quadrature_points(&q);
        let vol = g.h().powi(d as i32);
        let mut total = 0.0;
        for (k, x) in pts.chunks(d).enumerate() {
            let grad = interpolate(g, &self.homogenized.u0, x).1;
            total += vol * q.rule.weights[k % q.len()] * f(x, &grad[..d]);
        }
        total
    }
}

impl LimitObservable for CellObservable<'_> {
    fn dim(&self) -> usize {
        self.cells.dim()
    }

    fn weighted(&self, weight: &Field, component: usize) -> f64 {
        let d = self.dim();
        let mg = &self.cells.macro_grid;
        let mut total = 0.0;
        for term in &weight.terms {
            let ybar = term.y_integral();
            let m = self.moments(|y| term.y_part(y));
            total += term.scale
                * self.integrate_d(|x, grad| {
                    let xv = term.x_part(x);
                    let mut v = ybar * grad[component];
                    // Q1 interpolation of the moments between macroscopic nodes
                    let (ix, tx) = crate::two_scale::locate(mg, x);
                    for c in 0..1usize << d {
                        let (node, w, _) =
                            crate::two_scale::corner_weights(&ix, &tx, c, d, mg.nodes_per_axis(), false, mg.h());
                        if w == 0.0 {
                            continue;
                        }
                        for l in 0..d {
                            v += w * grad[l] * m[(node * d + component) * d + l];
                        }
                    }
                    xv * v
                });
        }
        total
    }

    /// By the cell identity `∫_Y A (e_l + ∇_y w^l) dy = A⁰ e_l`, the flux is `∫_D A⁰ ∇u0`.
    fn flux(&self, component: usize) -> f64 {
        let d = self.dim();
        let mut t = [0.0; 9];
        self.integrate_d(|x, grad| {
            self.tensor.eval(x, &mut t);
            (0..d).map(|l| t[component * d + l] * grad[l]).sum()
        })
    }
}

impl EpsObservable for ExactEps1d<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn weighted(&self, weight: &Field, _component: usize) -> f64 {
        self.weighted_functional(weight)
    }

    fn flux(&self, _component: usize) -> f64 {
        self.flux_functional()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EpsFemObservable<'a> {
    pub problem: &'a EpsilonProblem<'a>,
    pub solution: &'a EpsFem,
}

impl EpsObservable for EpsFemObservable<'_> {
    fn dim(&self) -> usize {
        self.solution.grid.dim
    }

    fn weighted(&self, weight: &Field, component: usize) -> f64 {
        self.solution.weighted_functional(weight, component)
    }

    fn flux(&self, component: usize) -> f64 {
        self.solution.flux_functional(self.problem, component)
    }
}

/// Symmetric positive definite noise covariance, stored through its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: Vec<f64>,
    chol: Cholesky,
}

impl Covariance {
    pub fn new(matrix: Vec<f64>, n: usize) -> Result<Self> {
        let chol = Cholesky::new(&matrix, n)?;
        Ok(Covariance { matrix, chol })
    }

    pub fn scaled_identity(n: usize, variance: f64) -> Result<Self> {
        Self::diagonal(&vec![variance; n])
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let n = variances.len();
        let mut m = vec![0.0; n * n];
        for (i, v) in variances.iter().enumerate() {
            m[i * n + i] = *v;
        }
        Self::new(m, n)
    }

    pub fn dim(&self) -> usize {
        self.chol.dim()
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[i * n + j] == 0.0))
    }

    /// `L^{-1} r` with `Σ = L Lᵀ`, so that `|L^{-1} r|² = rᵀ Σ^{-1} r`.
    pub fn whiten(&self, r: &[f64]) -> Vec<f64> {
        self.chol.solve_lower(r)
    }

    /// One draw from `N(0, Σ)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let xi: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        self.chol.mul_lower(&xi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardData {
    pub delta: Vec<f64>,
    pub sigma: Covariance,
    /// Generating parameter and noise seed when the data are synthetic.
    pub z_ref: Option<Vec<f64>>,
    pub noise_seed: Option<u64>,
}

impl ForwardData {
    pub fn new(delta: Vec<f64>, sigma: Covariance) -> Result<Self> {
        if delta.len() != sigma.dim() {
            return Err(Error::DimensionMismatch {
                expected: sigma.dim(),
                found: delta.len(),
            });
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data"));
        }
        Ok(ForwardData {
            delta,
            sigma,
            z_ref: None,
            noise_seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }
}

/// `½ |δ − G|²_Σ`.
pub fn potential(g: &[f64], data: &ForwardData) -> Result<f64> {
    if g.len() != data.delta.len() {
        return Err(Error::DimensionMismatch {
            expected: data.delta.len(),
            found: g.len(),
        });
    }
    let r: Vec<f64> = data.delta.iter().zip(g).map(|(d, v)| d - v).collect();
    let w = data.sigma.whiten(&r);
    let phi = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    if !phi.is_finite() {
        return Err(Error::NonFinite("potential"));
    }
    Ok(phi)
}

/// `δ = G(z_ref) + ν` with `ν ~ N(0, Σ)` drawn from `noise_seed`.
pub fn synthesize_data(clean: Vec<f64>, z_ref: &[f64], sigma: Covariance, noise_seed: u64) -> Result<ForwardData> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = sigma.sample(&mut rng);
    let delta = clean.iter().zip(&noise).map(|(g, n)| g + n).collect();
    let mut data = ForwardData::new(delta, sigma)?;
    data.z_ref = Some(z_ref.to_vec());
    data.noise_seed = Some(noise_seed);
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Factor, SeparableProduct};

    #[test]
    fn potential_arithmetic() {
        let sigma = Covariance::scaled_identity(2, 1e-3).unwrap();
        let data = ForwardData::new(vec![1e-3, 0.0], sigma).unwrap();
        assert_eq!(potential(&[1e-3, 0.0], &data).unwrap(), 0.0);
        let p = potential(&[0.0, 0.0], &data).unwrap();
        assert!((p - 5e-4).abs() < 1e-15);
        let data2 = ForwardData::new(vec![2e-3, 0.0], Covariance::scaled_identity(2, 1e-3).unwrap()).unwrap();
        let p2 = potential(&[0.0, 0.0], &data2).unwrap();
        assert!((p2 - 4.0 * p).abs() < 1e-15);
    }

    #[test]
    fn non_periodic_weights_are_rejected() {
        let w = Field::single(SeparableProduct {
            scale: 1.0,
            x: vec![Factor::One],
            y: vec![Factor::Power(1)],
        });
        let r = ObservationSpec::new(
            vec![Functional::Weighted { weight: w, component: 0 }],
            ObservationMode::HomogenizedCorrector,
        );
        assert!(r.is_err());
    }

    #[test]
    fn mode_mismatch_is_reported() {
        let spec = ObservationSpec::new(
            vec![Functional::Flux { component: 0, scale: 1.0 }],
            ObservationMode::Flux,
        )
        .unwrap();
        assert!(ObservationSpec::new(spec.functionals.clone(), ObservationMode::HomogenizedCorrector).is_err());
    }

    #[test]
    fn singular_covariance_is_rejected() {
        assert!(matches!(
            Covariance::new(vec![1.0, 1.0, 1.0, 1.0], 2),
            Err(Error::SingularCovariance)
        ));
    }
}
