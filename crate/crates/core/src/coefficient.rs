//! Parametric two-scale coefficients `A(z; x, y)` with uniform or log-Gaussian priors.

use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::field::{Field, SeparableProduct};

/// Points per axis of the grid used to bound the mean field.
pub const SAMPLING_POINTS: usize = 64;
/// Relative slack allowed when checking the admissibility bound on the expansion.
pub const BOUND_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriorKind {
    Uniform,
    Gaussian,
}

/// Truncated parameter sequence `z = (z_1, ..., z_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(ParameterVector(entries))
    }

    /// Checks membership in the support of the prior.
    pub fn for_prior(kind: PriorKind, entries: Vec<f64>) -> Result<Self> {
        let z = Self::new(entries)?;
        if kind == PriorKind::Uniform && z.0.iter().any(|v| v.abs() > 1.0) {
            return Err(invalid("uniform-prior parameters must lie in [-1, 1]"));
        }
        Ok(z)
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(alloc::vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Draws `j` i.i.d. coordinates from the prior.
pub fn sample_prior_with<R: Rng + ?Sized>(kind: PriorKind, j: usize, rng: &mut R) -> ParameterVector {
    let v = (0..j)
        .map(|_| match kind {
            PriorKind::Uniform => rng.random_range(-1.0..=1.0),
            PriorKind::Gaussian => rng.sample(StandardNormal),
        })
        .collect();
    ParameterVector(v)
}

pub fn sample_prior(kind: PriorKind, j: usize, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_prior_with(kind, j, &mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTerm {
    pub psi: SeparableProduct,
    /// `sup |psi|`
    pub sup_norm: f64,
    /// `C^1` in `x`, `C^{1,1}` in `y` bound.
    pub c11_norm: f64,
}

impl ExpansionTerm {
    pub fn new(psi: SeparableProduct) -> Self {
        let sup_norm = psi.sup_abs();
        let c11_norm = psi.c11_norm();
        ExpansionTerm {
            psi,
            sup_norm,
            c11_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientKind {
    Uniform { kappa: f64 },
    LogGaussian { offset: Field },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleCoefficient {
    dim: usize,
    pub kind: CoefficientKind,
    pub mean: Field,
    pub terms: Vec<ExpansionTerm>,
    mean_range: (f64, f64),
    offset_range: (f64, f64),
}

impl TwoScaleCoefficient {
    /// `Ā + Σ z_j ψ_j`. When `kappa` is `None` the smallest admissible value is used.
    pub fn uniform(mean: Field, psis: Vec<SeparableProduct>, kappa: Option<f64>) -> Result<Self> {
        let dim = mean.dim();
        check_dims(dim, &psis)?;
        let mean_range = mean.sampled_range(SAMPLING_POINTS);
        let inf = mean_range.0;
        if inf <= 0.0 {
            return Err(Error::NotCoercive { min: inf });
        }
        let terms: Vec<ExpansionTerm> = psis.into_iter().map(ExpansionTerm::new).collect();
        let sum: f64 = terms.iter().map(|t| t.sup_norm).sum();
        let kappa = match kappa {
            Some(k) if k > 0.0 && k.is_finite() => k,
            Some(_) => return Err(invalid("kappa must be positive")),
            None => {
                if sum >= inf {
                    return Err(Error::BoundViolated { sum, bound: inf });
                }
                if sum == 0.0 {
                    1.0
                } else {
                    sum / (inf - sum)
                }
            }
        };
        let bound = kappa / (1.0 + kappa) * inf;
        if sum > bound * (1.0 + BOUND_MARGIN) {
            return Err(Error::BoundViolated { sum, bound });
        }
        Ok(TwoScaleCoefficient {
            dim,
            kind: CoefficientKind::Uniform { kappa },
            mean,
            terms,
            mean_range,
            offset_range: (0.0, 0.0),
        })
    }

    /// `A* + exp(Ā + Σ z_j ψ_j)` with `A* ≥ 0`.
    pub fn log_gaussian(offset: Field, mean: Field, psis: Vec<SeparableProduct>) -> Result<Self> {
        let dim = mean.dim();
        if offset.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: offset.dim(),
            });
        }
        check_dims(dim, &psis)?;
        let offset_range = offset.sampled_range(SAMPLING_POINTS);
        if offset_range.0 < 0.0 {
            return Err(invalid("log-Gaussian offset field must be non-negative"));
        }
        Ok(TwoScaleCoefficient {
            dim,
            mean_range: mean.sampled_range(SAMPLING_POINTS),
            kind: CoefficientKind::LogGaussian { offset },
            mean,
            terms: psis.into_iter().map(ExpansionTerm::new).collect(),
            offset_range,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn prior(&self) -> PriorKind {
        match self.kind {
            CoefficientKind::Uniform { .. } => PriorKind::Uniform,
            CoefficientKind::LogGaussian { .. } => PriorKind::Gaussian,
        }
    }

    pub fn sample_prior(&self, seed: u64) -> ParameterVector {
        sample_prior(self.prior(), self.n_terms(), seed)
    }

    pub fn check_parameters(&self, z: &ParameterVector) -> Result<()> {
        if z.len() != self.terms.len() {
            return Err(Error::DimensionMismatch {
                expected: self.terms.len(),
                found: z.len(),
            });
        }
        Ok(())
    }

    /// Maps the affine expansion value `Ā + Σ z_j ψ_j` to the coefficient.
    #[inline]
    fn link(&self, s: f64, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            CoefficientKind::Uniform { .. } => s,
            CoefficientKind::LogGaussian { offset } => offset.eval(x, y) + s.exp(),
        }
    }

    /// Evaluation without argument checks; `z` must have one entry per term.
    #[inline]
    pub fn eval_unchecked(&self, z: &[f64], x: &[f64], y: &[f64]) -> f64 {
        let mut s = self.mean.eval(x, y);
        for (t, &zj) in self.terms.iter().zip(z) {
            if zj != 0.0 {
                s += zj * t.psi.eval(x, y);
            }
        }
        self.link(s, x, y)
    }

    pub fn eval(&self, z: &ParameterVector, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_parameters(z)?;
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len().max(y.len()),
            });
        }
        let v = self.eval_unchecked(z.as_slice(), x, y);
        if !v.is_finite() {
            return Err(Error::NonFinite("coefficient value"));
        }
        if v <= 0.0 {
            return Err(Error::NotCoercive { min: v });
        }
        Ok(v)
    }

    /// `(c_*(z), c^*(z))`; independent of `z` for the uniform kind.
    pub fn coercivity_bounds(&self, z: &ParameterVector) -> Result<(f64, f64)> {
        self.check_parameters(z)?;
        let (inf, sup) = self.mean_range;
        Ok(match self.kind {
            CoefficientKind::Uniform { kappa } => {
                let sum: f64 = self.terms.iter().map(|t| t.sup_norm).sum();
                (inf / (1.0 + kappa), sup + sum)
            }
            CoefficientKind::LogGaussian { .. } => {
                let s: f64 = self
                    .terms
                    .iter()
                    .zip(z.as_slice())
                    .map(|(t, zj)| zj.abs() * t.sup_norm)
                    .sum();
                (
                    self.offset_range.0 + (inf - s).exp(),
                    self.offset_range.1 + (sup + s).exp(),
                )
            }
        })
    }

    /// Values on the product of macroscopic points `xs` and cell points `ys` (each a flat
    /// list of `dim`-tuples); output is indexed `[i_x * n_y + i_y]`.
    pub fn tabulate(&self, z: &[f64], xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let nx = xs.len() / d;
        let ny = ys.len() / d;
        let mut out = alloc::vec![0.0; nx * ny];
        let mut products: Vec<&SeparableProduct> = self.mean.terms.iter().collect();
        let mut weights: Vec<f64> = alloc::vec![1.0; products.len()];
        for (t, &zj) in self.terms.iter().zip(z) {
            if zj != 0.0 {
                products.push(&t.psi);
                weights.push(zj);
            }
        }
        let m = products.len();
        let mut xp = alloc::vec![0.0; nx * m];
        for i in 0..nx {
            let x = &xs[i * d..(i + 1) * d];
            for (k, p) in products.iter().enumerate() {
                xp[i * m + k] = weights[k] * p.scale * p.x_part(x);
            }
        }
        let mut yp = alloc::vec![0.0; ny * m];
        for j in 0..ny {
            let y = &ys[j * d..(j + 1) * d];
            for (k, p) in products.iter().enumerate() {
                yp[j * m + k] = p.y_part(y);
            }
        }
        for i in 0..nx {
            let xr = &xp[i * m..(i + 1) * m];
            for j in 0..ny {
                let yr = &yp[j * m..(j + 1) * m];
                out[i * ny + j] = xr.iter().zip(yr).map(|(a, b)| a * b).sum();
            }
        }
        if let CoefficientKind::LogGaussian { offset } = &self.kind {
            for i in 0..nx {
                let x = &xs[i * d..(i + 1) * d];
                for j in 0..ny {
                    let y = &ys[j * d..(j + 1) * d];
                    let v = &mut out[i * ny + j];
                    *v = offset.eval(x, y) + v.exp();
                }
            }
        }
        out
    }
}

fn check_dims(dim: usize, psis: &[SeparableProduct]) -> Result<()> {
    for p in psis {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Factor;
    use alloc::vec;

    fn family_1d(kappa: Option<f64>) -> TwoScaleCoefficient {
        let lin = Factor::Affine { c0: 1.0, c1: 1.0 };
        TwoScaleCoefficient::uniform(
            Field::constant(1, 9.0),
            vec![
                SeparableProduct::new(1.0, vec![lin], vec![Factor::Sin(1)]).unwrap(),
                SeparableProduct::new(1.0, vec![lin], vec![Factor::Cos(1)]).unwrap(),
            ],
            kappa,
        )
        .unwrap()
    }

    #[test]
    fn zero_parameter_gives_mean() {
        let c = family_1d(None);
        let z = ParameterVector::zeros(2);
        assert_eq!(c.eval(&z, &[0.3], &[0.7]).unwrap(), 9.0);
    }

    #[test]
    fn single_mode_value() {
        let c = family_1d(None);
        let z = ParameterVector::new(vec![1.0, 0.0]).unwrap();
        let v = c.eval(&z, &[0.5], &[0.25]).unwrap();
        assert!((v - 10.5).abs() < 1e-14);
    }

    #[test]
    fn uniform_bounds_at_equality() {
        let c = family_1d(Some(0.8));
        let (lo, hi) = c.coercivity_bounds(&ParameterVector::zeros(2)).unwrap();
        assert!((lo - 5.0).abs() < 1e-12);
        assert!((hi - 13.0).abs() < 1e-12);
        // minimal admissible kappa coincides with the equality case
        match family_1d(None).kind {
            CoefficientKind::Uniform { kappa } => assert!((kappa - 0.8).abs() < 1e-12),
            _ => unreachable!(),
        }
    }

    #[test]
    fn too_small_kappa_is_rejected() {
        let lin = Factor::Affine { c0: 1.0, c1: 1.0 };
        let r = TwoScaleCoefficient::uniform(
            Field::constant(1, 9.0),
            vec![SeparableProduct::new(1.0, vec![lin], vec![Factor::Sin(1)]).unwrap()],
            Some(0.1),
        );
        assert!(matches!(r, Err(Error::BoundViolated { .. })));
    }

    #[test]
    fn log_gaussian_single_term() {
        let c = TwoScaleCoefficient::log_gaussian(
            Field::zero(1),
            Field::zero(1),
            vec![SeparableProduct::constant(1, 1.0)],
        )
        .unwrap();
        let z = ParameterVector::new(vec![0.3]).unwrap();
        assert!((c.eval(&z, &[0.1], &[0.9]).unwrap() - 0.3f64.exp()).abs() < 1e-15);
        let (lo, hi) = c.coercivity_bounds(&z).unwrap();
        assert!((lo - (-0.3f64).exp()).abs() < 1e-15);
        assert!((hi - 0.3f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn empty_expansion_bounds() {
        let c = TwoScaleCoefficient::uniform(Field::constant(2, 3.0), vec![], None).unwrap();
        let (lo, hi) = c.coercivity_bounds(&ParameterVector::zeros(0)).unwrap();
        assert!(lo > 0.0 && lo <= 3.0 && hi == 3.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let c = family_1d(None);
        let z = ParameterVector::zeros(3);
        assert!(matches!(
            c.eval(&z, &[0.1], &[0.1]),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn tabulate_matches_pointwise() {
        let c = family_1d(None);
        let z = [0.4, -0.7];
        let xs = [0.0, 0.3, 1.0];
        let ys = [0.1, 0.6];
        let t = c.tabulate(&z, &xs, &ys);
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                let v = c.eval_unchecked(&z, &[*x], &[*y]);
                assert!((t[i * 2 + j] - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn prior_sampling_is_reproducible() {
        let a = sample_prior(PriorKind::Uniform, 2, 7);
        let b = sample_prior(PriorKind::Uniform, 2, 7);
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn gaussian_prior_moments() {
        let n = 100_000;
        let z = sample_prior(PriorKind::Gaussian, n, 11);
        let mean = z.as_slice().iter().sum::<f64>() / n as f64;
        let var = z.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let se = (1.0 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se);
        // variance of the sample variance is 2/n for a normal law
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }
}
