use twoscale_core::bayes::*;
use twoscale_core::catalogue;
use twoscale_core::coefficient::PriorKind;
use twoscale_core::forward::{AffineTable, FnModel, ForwardModel};
use twoscale_core::observation::{Covariance, ForwardData};
use twoscale_core::quadrature::Rule;
use twoscale_core::stats;
use twoscale_core::Result;

type Map = fn(&[f64]) -> Result<Vec<f64>>;

fn identity(z: &[f64]) -> Result<Vec<f64>> {
    Ok(z.to_vec())
}

fn shifted(z: &[f64]) -> Result<Vec<f64>> {
    Ok(vec![z[0] + 0.1])
}

fn toy(f: Map, variance: f64) -> Posterior<FnModel<Map>> {
    let data = ForwardData::new(vec![0.0], Covariance::scaled_identity(1, variance).unwrap()).unwrap();
    Posterior::new(PriorKind::Uniform, FnModel { n_obs: 1, n_params: 1, f }, data).unwrap()
}

fn rule() -> Rule {
    Rule::gauss(10).composite(-1.0, 1.0, 40)
}

#[test]
fn scalar_chain_matches_the_quadrature_posterior() {
    let post = toy(identity, 0.25);
    let chain = run_independence_sampler(&post, 100_000, 3).unwrap();
    let density = |z: f64| (-2.0 * z * z).exp();
    let total = rule().integrate(density);
    let cdf = |t: f64| {
        if t <= -1.0 {
            0.0
        } else {
            Rule::gauss(10).composite(-1.0, t, 20).integrate(density) / total
        }
    };
    let ks = stats::ks_distance(&chain.coordinate(0, DEFAULT_BURN_IN), cdf);
    assert!(ks < 0.02, "KS {ks}");
    assert!(chain.acceptance_rate > 0.5 && chain.acceptance_rate < 1.0);
}

#[test]
fn normalizer_agrees_with_quadrature() {
    let post = toy(identity, 0.25);
    let est = estimate_normalizer(&post, 10_000, 11).unwrap();
    // prior density 1/2 on [-1, 1]
    let exact = 0.5 * rule().integrate(|z| (-2.0 * z * z).exp());
    assert!((est.z - exact).abs() < 3.0 * est.std_error, "{} vs {exact} ± {}", est.z, est.std_error);
    assert!(est.z >= (-est.max_potential).exp());
}

#[test]
fn hellinger_agrees_with_quadrature() {
    let a = toy(identity, 0.25);
    let b = toy(shifted, 0.25);
    let est = hellinger_estimate(&a, &b, 20_000, 5).unwrap();
    let da = |z: f64| (-2.0 * z * z).exp();
    let db = |z: f64| (-2.0 * (z + 0.1) * (z + 0.1)).exp();
    let (za, zb) = (rule().integrate(da), rule().integrate(db));
    let h2 = 0.5 * rule().integrate(|z| ((da(z) / za).sqrt() - (db(z) / zb).sqrt()).powi(2));
    let exact = h2.sqrt();
    assert!(
        (est.distance - exact).abs() < 3.0 * est.bootstrap_sd,
        "{} vs {exact} ± {}",
        est.distance,
        est.bootstrap_sd
    );
    assert!(est.ci.0 <= est.distance && est.distance <= est.ci.1);
}

#[test]
fn flat_likelihood_leaves_the_prior_mean_field() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let data = ForwardData::new(vec![0.0], Covariance::scaled_identity(1, 1.0).unwrap()).unwrap();
    let model = FnModel { n_obs: 1, n_params: 2, f: |_: &[f64]| Ok(vec![0.0]) };
    let post = Posterior::new(PriorKind::Uniform, model, data).unwrap();
    let chain = run_independence_sampler(&post, 20_000, 8).unwrap();
    assert_eq!(chain.acceptance_rate, 1.0);
    let xs = [0.1, 0.5, 0.9];
    let ys = [0.0, 0.25, 0.7];
    let mean = posterior_field_mean(&chain, &c, &xs, &ys, DEFAULT_BURN_IN).unwrap();
    let (mean2, var) = posterior_field_moments(&chain, &c, &xs, &ys, DEFAULT_BURN_IN).unwrap();
    for (m, m2) in mean.iter().zip(&mean2) {
        assert!((m - 9.0).abs() < 0.05, "{m}");
        assert!((m - m2).abs() < 1e-9);
    }
    assert!(var.iter().all(|v| *v >= 0.0));
}

#[test]
fn log_gaussian_normalizer_is_stable_across_seeds() {
    let c = catalogue::family("family:lognormal-2d").unwrap().build().unwrap();
    let points = [0.2, 0.3, 0.1, 0.6, 0.7, 0.4, 0.5, 0.2, 0.5, 0.5, 0.9, 0.1];
    let table = AffineTable::new(&c, &points);
    let n = points.len() / 4;
    let model = FnModel {
        n_obs: n,
        n_params: c.n_terms(),
        f: move |z: &[f64]| {
            let mut out = vec![0.0; n];
            table.values(z, &mut out);
            Ok(out)
        },
    };
    let z_ref = c.sample_prior(2024).into_inner();
    let delta = model.evaluate(&z_ref).unwrap();
    let data = ForwardData::new(delta, Covariance::scaled_identity(n, 1e-2).unwrap()).unwrap();
    let post = Posterior::new(PriorKind::Gaussian, model, data).unwrap();
    let z: Vec<f64> = (0..5).map(|s| estimate_normalizer(&post, 10_000, 100 + s).unwrap().z).collect();
    let m = stats::mean(&z);
    let spread = z.iter().fold(0.0f64, |a, v| a.max((v - m).abs())) / m;
    assert!(spread < 0.2, "{z:?}");
}
