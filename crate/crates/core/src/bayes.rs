//! Posterior sampling with the independence sampler, normalizing constants, Monte-Carlo
//! Hellinger distances and posterior averages of the coefficient.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

// shadowed by the inherent methods whenever std is linked
#[allow(unused_imports)]
use num_traits::Float;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coefficient::{sample_prior_with, PriorKind, TwoScaleCoefficient};
use crate::error::{invalid, Error, Result};
use crate::forward::ForwardModel;
use crate::observation::{potential, ForwardData};
use crate::stats;

/// Fraction of a chain discarded before averaging.
pub const DEFAULT_BURN_IN: f64 = 0.1;
pub const DEFAULT_BOOTSTRAP: usize = 200;

/// Prior, forward map and data: `dρ^δ/dρ ∝ exp(-Φ(z, δ))`.
pub struct Posterior<M> {
    pub prior: PriorKind,
    pub model: M,
    pub data: ForwardData,
}

impl<M: ForwardModel> Posterior<M> {
    pub fn new(prior: PriorKind, model: M, data: ForwardData) -> Result<Self> {
        if model.n_obs() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                found: model.n_obs(),
            });
        }
        Ok(Posterior { prior, model, data })
    }

    pub fn n_params(&self) -> usize {
        self.model.n_params()
    }

    /// `Φ(z, δ)`; failures carry the offending parameter.
    pub fn potential(&self, z: &[f64]) -> Result<f64> {
        self.model
            .evaluate(z)
            .and_then(|g| potential(&g, &self.data))
            .map_err(|e| match e {
                Error::ForwardFailure { .. } => e,
                other => Error::ForwardFailure {
                    z: z.to_vec(),
                    source: Box::new(other),
                },
            })
    }
}

/// `min(1, exp(Φ_current - Φ_proposal))`.
pub fn acceptance_probability(phi_current: f64, phi_proposal: f64) -> f64 {
    (phi_current - phi_proposal).exp().min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub n_params: usize,
    /// Visited states, `[step * n_params + j]`.
    pub samples: Vec<f64>,
    pub potentials: Vec<f64>,
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub acceptance_rate: f64,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    pub fn state(&self, step: usize) -> &[f64] {
        &self.samples[step * self.n_params..(step + 1) * self.n_params]
    }

    /// First step kept after discarding `fraction` of the chain.
    pub fn burn_in_start(&self, fraction: f64) -> usize {
        let k = (fraction.clamp(0.0, 1.0) * self.len() as f64).floor() as usize;
        k.min(self.len().saturating_sub(1))
    }

    /// Coordinate `j` over the kept part of the chain.
    pub fn coordinate(&self, j: usize, burn_in: f64) -> Vec<f64> {
        (self.burn_in_start(burn_in)..self.len()).map(|s| self.state(s)[j]).collect()
    }

    /// Per-coordinate posterior mean and standard deviation after burn-in.
    pub fn summary(&self, burn_in: f64) -> Vec<(f64, f64)> {
        (0..self.n_params)
            .map(|j| {
                let c = self.coordinate(j, burn_in);
                (stats::mean(&c), stats::std_dev(&c))
            })
            .collect()
    }
}

/// Metropolis-Hastings with proposals drawn independently from the prior.
///
/// The initial state is a prior draw; every step draws one proposal and one uniform
/// variate, so the random stream does not depend on the potentials.
pub fn run_independence_sampler<M: ForwardModel>(post: &Posterior<M>, n_steps: usize, seed: u64) -> Result<Chain> {
    if n_steps == 0 {
        return Err(invalid("a chain needs at least one step"));
    }
    let j = post.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = sample_prior_with(post.prior, j, &mut rng).into_inner();
    let mut phi = post.potential(&current)?;
    let mut samples = Vec::with_capacity(n_steps * j);
    let mut potentials = Vec::with_capacity(n_steps);
    let mut accepted = Vec::with_capacity(n_steps);
    let mut n_acc = 0usize;
    for _ in 0..n_steps {
        let proposal = sample_prior_with(post.prior, j, &mut rng).into_inner();
        let u: f64 = rng.random();
        let phi_p = post.potential(&proposal)?;
        let acc = u.ln() < phi - phi_p;
        if acc {
            current = proposal;
            phi = phi_p;
            n_acc += 1;
        }
        samples.extend_from_slice(&current);
        potentials.push(phi);
        accepted.push(acc);
    }
    Ok(Chain {
        n_params: j,
        samples,
        potentials,
        accepted,
        seed,
        acceptance_rate: n_acc as f64 / n_steps as f64,
    })
}

/// `n` prior draws, `[k * j + i]`.
pub fn prior_draws(kind: PriorKind, j: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * j);
    for _ in 0..n {
        out.extend(sample_prior_with(kind, j, &mut rng).into_inner());
    }
    out
}

/// `Φ` at every draw.
pub fn potentials_at<M: ForwardModel>(post: &Posterior<M>, draws: &[f64]) -> Result<Vec<f64>> {
    let j = post.n_params().max(1);
    draws.chunks(j).map(|z| post.potential(z)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizerEstimate {
    pub log_z: f64,
    pub z: f64,
    pub std_error: f64,
    /// Largest potential over the draws; `Ẑ ≥ exp(-max_potential)`.
    pub max_potential: f64,
}

/// `Ẑ = mean exp(-Φ_k)` over potentials at prior draws, with its standard error.
pub fn normalizer_from_potentials(phi: &[f64]) -> Result<NormalizerEstimate> {
    if phi.is_empty() {
        return Err(invalid("at least one draw is required"));
    }
    let n = phi.len() as f64;
    let log_z = stats::log_sum_exp(phi.iter().map(|p| -p)) - n.ln();
    if !log_z.is_finite() || log_z < f64::MIN_POSITIVE.ln() {
        return Err(Error::Underflow { log_estimate: log_z });
    }
    let z = log_z.exp();
    let var = phi.iter().map(|p| ((-p).exp() - z).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(NormalizerEstimate {
        log_z,
        z,
        std_error: (var / n).sqrt(),
        max_potential: phi.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn estimate_normalizer<M: ForwardModel>(post: &Posterior<M>, n: usize, seed: u64) -> Result<NormalizerEstimate> {
    let draws = prior_draws(post.prior, post.n_params(), n, seed);
    normalizer_from_potentials(&potentials_at(post, &draws)?)
}

/// `d̂` from potentials of two posteriors at shared prior draws.
pub fn hellinger_from_potentials(phi_a: &[f64], phi_b: &[f64]) -> Result<f64> {
    let idx: Vec<usize> = (0..phi_a.len()).collect();
    hellinger_indexed(phi_a, phi_b, &idx)
}

fn hellinger_indexed(phi_a: &[f64], phi_b: &[f64], idx: &[usize]) -> Result<f64> {
    if phi_a.len() != phi_b.len() {
        return Err(Error::DimensionMismatch {
            expected: phi_a.len(),
            found: phi_b.len(),
        });
    }
    if idx.is_empty() {
        return Err(invalid("at least one draw is required"));
    }
    let n = idx.len() as f64;
    let log_za = stats::log_sum_exp(idx.iter().map(|&k| -phi_a[k])) - n.ln();
    let log_zb = stats::log_sum_exp(idx.iter().map(|&k| -phi_b[k])) - n.ln();
    for l in [log_za, log_zb] {
        if !l.is_finite() {
            return Err(Error::Underflow { log_estimate: l });
        }
    }
    let mut s = 0.0;
    for &k in idx {
        let a = (-0.5 * (phi_a[k] + log_za)).exp();
        let b = (-0.5 * (phi_b[k] + log_zb)).exp();
        s += (a - b) * (a - b);
    }
    Ok((0.5 * s / n).clamp(0.0, 1.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HellingerEstimate {
    pub distance: f64,
    pub bootstrap_sd: f64,
    /// Central 95% bootstrap interval.
    pub ci: (f64, f64),
    pub n: usize,
}

fn resample(rng: &mut ChaCha8Rng, n: usize, idx: &mut [usize]) {
    for v in idx.iter_mut() {
        *v = rng.random_range(0..n);
    }
}

pub fn hellinger_with_bootstrap(phi_a: &[f64], phi_b: &[f64], n_boot: usize, seed: u64) -> Result<HellingerEstimate> {
    let distance = hellinger_from_potentials(phi_a, phi_b)?;
    let n = phi_a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = vec![0usize; n];
    let mut reps = Vec::with_capacity(n_boot);
    for _ in 0..n_boot {
        resample(&mut rng, n, &mut idx);
        reps.push(hellinger_indexed(phi_a, phi_b, &idx)?);
    }
    Ok(HellingerEstimate {
        distance,
        bootstrap_sd: stats::std_dev(&reps),
        ci: (stats::quantile(&reps, 0.025), stats::quantile(&reps, 0.975)),
        n,
    })
}

pub fn hellinger_estimate<A: ForwardModel, B: ForwardModel>(
    a: &Posterior<A>,
    b: &Posterior<B>,
    n: usize,
    seed: u64,
) -> Result<HellingerEstimate> {
    if a.prior != b.prior || a.n_params() != b.n_params() {
        return Err(invalid("Hellinger estimates need a common prior"));
    }
    let draws = prior_draws(a.prior, a.n_params(), n, seed);
    let pa = potentials_at(a, &draws)?;
    let pb = potentials_at(b, &draws)?;
    hellinger_with_bootstrap(&pa, &pb, DEFAULT_BOOTSTRAP, seed ^ 0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub bootstrap_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateStudy {
    /// Ladder values (ε or `2^{-L}`).
    pub x: Vec<f64>,
    pub estimates: Vec<HellingerEstimate>,
    pub monotone: bool,
    /// Log-log slope of `d̂` against `x`, refused when a distance is within its noise.
    pub fit: core::result::Result<SlopeFit, Error>,
}

/// Distances of every rung to the reference from shared draws, with a joint bootstrap of
/// the fitted slope (the same resampled draws for all rungs).
pub fn hellinger_rate_study(
    x: &[f64],
    reference: &[f64],
    rungs: &[Vec<f64>],
    n_boot: usize,
    seed: u64,
) -> Result<RateStudy> {
    if x.len() != rungs.len() || x.len() < 3 {
        return Err(invalid("a rate study needs at least three rungs"));
    }
    let mut estimates = Vec::with_capacity(x.len());
    for (k, r) in rungs.iter().enumerate() {
        estimates.push(hellinger_with_bootstrap(r, reference, n_boot, seed.wrapping_add(k as u64))?);
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]));
    let monotone = order
        .windows(2)
        .all(|w| estimates[w[1]].distance < estimates[w[0]].distance);

    let fit = (|| {
        for e in &estimates {
            if e.distance <= 2.0 * e.bootstrap_sd || e.distance == 0.0 {
                return Err(Error::SignalBelowNoise {
                    signal: e.distance,
                    noise: e.bootstrap_sd,
                });
            }
        }
        let d: Vec<f64> = estimates.iter().map(|e| e.distance).collect();
        let slope = stats::loglog_slope(x, &d);
        let n = reference.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5851_f42d_4c95_7f2d);
        let mut idx = vec![0usize; n];
        let mut reps = Vec::with_capacity(n_boot);
        let mut db = vec![0.0; x.len()];
        for _ in 0..n_boot {
            resample(&mut rng, n, &mut idx);
            for (k, r) in rungs.iter().enumerate() {
                db[k] = hellinger_indexed(r, reference, &idx)?;
            }
            if db.iter().all(|v| *v > 0.0) {
                reps.push(stats::loglog_slope(x, &db));
            }
        }
        Ok(SlopeFit {
            slope,
            bootstrap_sd: stats::std_dev(&reps),
        })
    })();
    Ok(RateStudy {
        x: x.to_vec(),
        estimates,
        monotone,
        fit,
    })
}

/// Distinct consecutive states of the kept part of the chain with their multiplicities.
fn grouped_states(chain: &Chain, burn_in: f64) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for s in chain.burn_in_start(burn_in)..chain.len() {
        match out.last_mut() {
            Some((_, count)) if !chain.accepted[s] => *count += 1,
            _ => out.push((s, 1)),
        }
    }
    out
}

/// Pointwise mean and variance of `A(z_k; x, y)` over the kept chain states on the product
/// of the points `xs` and `ys` (as in [`TwoScaleCoefficient::tabulate`]).
pub fn posterior_field_moments(
    chain: &Chain,
    coeff: &TwoScaleCoefficient,
    xs: &[f64],
    ys: &[f64],
    burn_in: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if chain.is_empty() {
        return Err(invalid("empty chain"));
    }
    if chain.n_params != coeff.n_terms() {
        return Err(Error::DimensionMismatch {
            expected: coeff.n_terms(),
            found: chain.n_params,
        });
    }
    let groups = grouped_states(chain, burn_in);
    let total: usize = groups.iter().map(|g| g.1).sum();
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut seen = 0usize;
    // weighted Welford update
    for (s, count) in groups {
        let a = coeff.tabulate(chain.state(s), xs, ys);
        if mean.is_empty() {
            mean = vec![0.0; a.len()];
            m2 = vec![0.0; a.len()];
        }
        let new = seen + count;
        for ((m, q), v) in mean.iter_mut().zip(m2.iter_mut()).zip(&a) {
            let delta = v - *m;
            *m += delta * count as f64 / new as f64;
            *q += delta * (v - *m) * count as f64;
        }
        seen = new;
    }
    let var = m2.iter().map(|q| q / total as f64).collect();
    Ok((mean, var))
}

/// Pointwise posterior mean of the coefficient. For the uniform kind the coefficient is
/// affine in `z`, so this is the coefficient at the mean parameter.
pub fn posterior_field_mean(
    chain: &Chain,
    coeff: &TwoScaleCoefficient,
    xs: &[f64],
    ys: &[f64],
    burn_in: f64,
) -> Result<Vec<f64>> {
    if chain.is_empty() {
        return Err(invalid("empty chain"));
    }
    if coeff.prior() == PriorKind::Uniform && chain.n_params == coeff.n_terms() {
        let zbar: Vec<f64> = chain.summary(burn_in).iter().map(|m| m.0).collect();
        return Ok(coeff.tabulate(&zbar, xs, ys));
    }
    Ok(posterior_field_moments(chain, coeff, xs, ys, burn_in)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::FnModel;
    use crate::observation::Covariance;

    #[test]
    fn flat_likelihood_accepts_everything() {
        let model = FnModel {
            n_obs: 1,
            n_params: 2,
            f: |_: &[f64]| Ok(vec![0.0]),
        };
        let data = ForwardData::new(vec![0.0], Covariance::scaled_identity(1, 1.0).unwrap()).unwrap();
        let post = Posterior::new(PriorKind::Uniform, model, data).unwrap();
        let chain = run_independence_sampler(&post, 4000, 3).unwrap();
        assert_eq!(chain.acceptance_rate, 1.0);
        for (m, s) in chain.summary(0.0) {
            // U[-1, 1]: mean 0, sd 1/√3
            assert!(m.abs() < 0.05);
            assert!((s - 1.0 / 3f64.sqrt()).abs() < 0.03);
        }
    }

    #[test]
    fn detailed_balance_on_three_states() {
        let q: [f64; 3] = [0.2, 0.5, 0.3];
        let phi: [f64; 3] = [0.3, 1.7, 0.9];
        let mut pi: Vec<f64> = q.iter().zip(&phi).map(|(q, p)| q * (-p).exp()).collect();
        let s: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= s);
        let mut p = [[0.0; 3]; 3];
        for i in 0..3 {
            let mut stay = 1.0;
            for j in 0..3 {
                if i != j {
                    p[i][j] = q[j] * acceptance_probability(phi[i], phi[j]);
                    stay -= p[i][j];
                }
            }
            p[i][i] = stay;
        }
        for j in 0..3 {
            let v: f64 = (0..3).map(|i| pi[i] * p[i][j]).sum();
            assert!((v - pi[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_shift_of_the_potential_keeps_the_trajectory() {
        let make = || FnModel {
            n_obs: 2,
            n_params: 1,
            // dyadic values keep `Φ + c` exact
            f: |z: &[f64]| Ok(vec![(z[0] * 64.0).round() / 64.0, 0.0]),
        };
        // the second residual adds the constant 2c² to the potential
        let data = |c: f64| ForwardData::new(vec![0.0, c], Covariance::scaled_identity(2, 0.25).unwrap()).unwrap();
        let a = Posterior::new(PriorKind::Uniform, make(), data(0.0)).unwrap();
        let b = Posterior::new(PriorKind::Uniform, make(), data(3.0)).unwrap();
        let ca = run_independence_sampler(&a, 500, 11).unwrap();
        let cb = run_independence_sampler(&b, 500, 11).unwrap();
        assert_eq!(cb.potentials[0], ca.potentials[0] + 18.0);
        assert_eq!(ca.samples, cb.samples);
        assert_eq!(ca.accepted, cb.accepted);
    }

    #[test]
    fn normalizer_of_constant_potentials() {
        let z = normalizer_from_potentials(&[0.0; 10]).unwrap();
        assert_eq!(z.z, 1.0);
        let z = normalizer_from_potentials(&[2.5; 10]).unwrap();
        assert!((z.z - (-2.5f64).exp()).abs() < 1e-15);
        assert!(matches!(normalizer_from_potentials(&[1e4; 3]), Err(Error::Underflow { .. })));
    }

    #[test]
    fn hellinger_is_symmetric_and_zero_on_equal_models() {
        let a = [0.1, 2.0, 0.7, 5.0];
        let b = [1.0, 0.2, 0.3, 0.4];
        assert_eq!(hellinger_from_potentials(&a, &a).unwrap(), 0.0);
        assert_eq!(
            hellinger_from_potentials(&a, &b).unwrap(),
            hellinger_from_potentials(&b, &a).unwrap()
        );
        let c = [3.0; 4];
        let d = [0.0; 4];
        assert_eq!(hellinger_from_potentials(&c, &d).unwrap(), 0.0);
    }

    #[test]
    fn identical_rungs_refuse_the_fit() {
        let r = vec![0.5, 1.0, 1.5, 0.2];
        let study = hellinger_rate_study(&[0.5, 0.25, 0.125], &r, &[r.clone(), r.clone(), r.clone()], 20, 1).unwrap();
        assert!(study.estimates.iter().all(|e| e.distance == 0.0));
        assert!(matches!(study.fit, Err(Error::SignalBelowNoise { .. })));
    }

    #[test]
    fn field_moments_of_a_single_state() {
        use crate::field::{Factor, Field, SeparableProduct};
        let coeff = TwoScaleCoefficient::uniform(
            Field::constant(1, 9.0),
            vec![SeparableProduct::new(1.0, vec![Factor::One], vec![Factor::Sin(1)]).unwrap()],
            None,
        )
        .unwrap();
        let chain = Chain {
            n_params: 1,
            samples: vec![0.5; 5],
            potentials: vec![0.0; 5],
            accepted: vec![true, false, false, false, false],
            seed: 0,
            acceptance_rate: 0.2,
        };
        let ys = [0.0, 0.25, 0.5];
        let (m, v) = posterior_field_moments(&chain, &coeff, &[0.3], &ys, 0.0).unwrap();
        let direct = coeff.tabulate(&[0.5], &[0.3], &ys);
        assert_eq!(m, direct);
        assert!(v.iter().all(|x| *x == 0.0));
        let fast = posterior_field_mean(&chain, &coeff, &[0.3], &ys, 0.0).unwrap();
        assert_eq!(fast, direct);
    }
}
