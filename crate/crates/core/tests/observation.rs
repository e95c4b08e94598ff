use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use twoscale_core::catalogue;
use twoscale_core::coefficient::TwoScaleCoefficient;
use twoscale_core::field::{Factor, Field, SeparableProduct};
use twoscale_core::fine_scale::{solve_eps_1d_exact, EpsilonProblem};
use twoscale_core::forward::{CellRouteModel, ForwardModel, Quadrature1dModel, TwoScaleFeModel};
use twoscale_core::homogenized::solve_homogenized_1d;
use twoscale_core::observation::*;
use twoscale_core::two_scale::{SpaceKind, TwoScaleSettings, TwoScaleSystem};

fn constant(dim: usize, a: f64) -> TwoScaleCoefficient {
    TwoScaleCoefficient::uniform(Field::constant(dim, a), vec![], None).unwrap()
}

fn spec(set: &str, mode: ObservationMode) -> ObservationSpec {
    let f = catalogue::observation_set(set)
        .unwrap()
        .iter()
        .map(|i| catalogue::observation(i).unwrap())
        .collect();
    ObservationSpec::new(f, mode).unwrap()
}

fn weight_x() -> Functional {
    catalogue::observation("x").unwrap()
}

#[test]
fn poisson_weighted_by_x() {
    let c = constant(1, 1.0);
    let f = Field::constant(1, 1.0);
    let s = ObservationSpec::new(vec![weight_x()], ObservationMode::HomogenizedCorrector).unwrap();
    let exact = -1.0 / 12.0;

    let closed = solve_homogenized_1d(&c, &[], &f).unwrap();
    let g = forward_map_homogenized(&s, &closed).unwrap();
    assert!((g[0] - exact).abs() < 1e-12, "{}", g[0]);

    let system = TwoScaleSystem::assemble(&c, &[], &f, TwoScaleSettings::new(6, SpaceKind::Sparse)).unwrap();
    let sol = system.solve().unwrap();
    let g = forward_map_homogenized(&s, &TwoScaleFe { system: &system, solution: &sol }).unwrap();
    assert!((g[0] - exact).abs() < 1e-4, "{}", g[0]);
}

#[test]
fn macroscopic_weights_see_only_u0() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let system = TwoScaleSystem::assemble(&c, &[0.7, -0.4], &f, TwoScaleSettings::new(5, SpaceKind::Full)).unwrap();
    let sol = system.solve().unwrap();
    let mut u0_only = sol.clone();
    u0_only.u1.iter_mut().for_each(|v| *v = 0.0);
    for id in ["x", "x2"] {
        let Functional::Weighted { weight, component } = catalogue::observation(id).unwrap() else {
            unreachable!()
        };
        let full = sol.weighted_functional(&weight, component);
        let reduced = u0_only.weighted_functional(&weight, component);
        assert!((full - reduced).abs() <= 1e-12 * full.abs(), "{full} {reduced}");
    }
}

#[test]
fn flux_of_the_limit_equals_homogenized_flux() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let z = [0.7, -0.4];
    let closed = solve_homogenized_1d(&c, &z, &f).unwrap();
    // ∫ A⁰ u0' by direct quadrature of the closed-form derivative
    let rule = twoscale_core::quadrature::Rule::gauss(8).composite(0.0, 1.0, 32);
    let direct = rule.integrate(|x| closed.a0(x) * closed.u0_derivative(x));
    let system = TwoScaleSystem::assemble(&c, &z, &f, TwoScaleSettings::new(7, SpaceKind::Sparse)).unwrap();
    let sol = system.solve().unwrap();
    let fe = system.flux(&sol, 0);
    assert!((fe - direct).abs() < 1e-3 * direct.abs().max(1e-3), "{fe} {direct}");
    assert!((closed.flux_functional() - direct).abs() < 1e-10);
}

#[test]
fn cell_route_agrees_with_closed_form_in_one_dimension() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let z = [0.7, -0.4];
    for (set, mode) in [
        ("obs:1d-u0u1", ObservationMode::HomogenizedCorrector),
        ("obs:1d-u0-only", ObservationMode::HomogenizedCorrector),
        ("obs:1d-flux", ObservationMode::Flux),
    ] {
        let s = spec(set, mode);
        let exact = Quadrature1dModel::homogenized(&c, &f, &s).unwrap().evaluate(&z).unwrap();
        let route = CellRouteModel::new(c.clone(), f.clone(), s, 6, 7, 8).unwrap().evaluate(&z).unwrap();
        for (a, b) in route.iter().zip(&exact) {
            assert!((a - b).abs() < 2e-3 * b.abs().max(0.01), "{set}: {a} vs {b}");
        }
    }
}

#[test]
fn cell_route_agrees_with_two_scale_galerkin_in_two_dimensions() {
    let c = catalogue::family("family:uniform-2d").unwrap().build().unwrap();
    let f = Field::constant(2, 1.0);
    let ids = ["u2d-obs-sin1-cos1-p1", "u2d-obs-cos1-cos1-p2", "u2d-obs-sin2-sin1-p1"];
    let s = ObservationSpec::new(
        ids.iter().map(|i| catalogue::observation(i).unwrap()).collect(),
        ObservationMode::HomogenizedCorrector,
    )
    .unwrap();
    let z = c.sample_prior(5).into_inner();
    let route = CellRouteModel::new(c.clone(), f.clone(), s.clone(), 3, 4, 4).unwrap().evaluate(&z).unwrap();
    let fe = TwoScaleFeModel::new(c, f, s, TwoScaleSettings::new(4, SpaceKind::Sparse))
        .unwrap()
        .evaluate(&z)
        .unwrap();
    let scale = fe.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (a, b) in route.iter().zip(&fe) {
        assert!((a - b).abs() < 0.01 * scale, "{a} vs {b}");
    }
}

#[test]
fn constant_weight_of_the_oscillating_gradient_vanishes() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let p = EpsilonProblem::new(&c, &[0.7, -0.4], 1.0 / 16.0, &f, 16).unwrap();
    let sol = solve_eps_1d_exact(p).unwrap();
    let one = Field::constant(1, 1.0);
    assert!(sol.weighted_functional(&one).abs() < 1e-9);
}

#[test]
fn zero_source_gives_zero_observations() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::zero(1);
    for (set, mode) in [
        ("obs:1d-u0u1", ObservationMode::HomogenizedCorrector),
        ("obs:1d-flux", ObservationMode::Flux),
    ] {
        let g = Quadrature1dModel::homogenized(&c, &f, &spec(set, mode))
            .unwrap()
            .evaluate(&[0.3, 0.2])
            .unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn flux_depends_only_on_the_radius() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let s = spec("obs:1d-flux", ObservationMode::Flux);
    let m = Quadrature1dModel::homogenized(&c, &f, &s).unwrap();
    let r = 0.8;
    let vals: Vec<f64> = (0..8)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 8.0 + 0.1;
            m.evaluate(&[r * t.cos(), r * t.sin()]).unwrap()[0]
        })
        .collect();
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((hi - lo) < 1e-6 * hi.abs(), "{vals:?}");
}

#[test]
fn mode_mismatch_is_an_error() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let closed = solve_homogenized_1d(&c, &[0.1, 0.1], &f).unwrap();
    let s = spec("obs:1d-u0u1", ObservationMode::TwoScaleEps);
    assert!(matches!(forward_map_homogenized(&s, &closed), Err(twoscale_core::Error::ModeMismatch(_))));
    let p = EpsilonProblem::new(&c, &[0.1, 0.1], 0.125, &f, 8).unwrap();
    let eps = solve_eps_1d_exact(p).unwrap();
    let s = spec("obs:1d-u0u1", ObservationMode::HomogenizedCorrector);
    assert!(matches!(forward_map_eps(&s, &eps), Err(twoscale_core::Error::ModeMismatch(_))));
}

#[test]
fn synthetic_data_is_reproducible_and_vanishes_with_the_noise() {
    let clean = vec![1.0, -2.0];
    let a = synthesize_data(clean.clone(), &[0.1], Covariance::scaled_identity(2, 1e-3).unwrap(), 9).unwrap();
    let b = synthesize_data(clean.clone(), &[0.1], Covariance::scaled_identity(2, 1e-3).unwrap(), 9).unwrap();
    assert_eq!(a.delta, b.delta);
    let tiny = synthesize_data(clean.clone(), &[0.1], Covariance::scaled_identity(2, 1e-24).unwrap(), 9).unwrap();
    for (d, c) in tiny.delta.iter().zip(&clean) {
        assert!((d - c).abs() < 1e-10);
    }
}

#[test]
fn noise_sample_covariance_matches() {
    let sigma = Covariance::new(vec![2.0, 0.6, 0.6, 1.0], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 10_000;
    let mut s = [0.0; 4];
    for _ in 0..n {
        let v = sigma.sample(&mut rng);
        for i in 0..2 {
            for j in 0..2 {
                s[i * 2 + j] += v[i] * v[j] / n as f64;
            }
        }
    }
    let m = sigma.matrix();
    for i in 0..2 {
        for j in 0..2 {
            // standard error of a Gaussian sample second moment
            let se = ((m[i * 2 + i] * m[j * 2 + j] + m[i * 2 + j] * m[i * 2 + j]) / n as f64).sqrt();
            assert!((s[i * 2 + j] - m[i * 2 + j]).abs() < 4.0 * se, "{s:?}");
        }
    }
}

#[test]
fn y_dependent_weight_sees_the_corrector() {
    let c = catalogue::family("family:sin-cos-1d").unwrap().build().unwrap();
    let f = Field::constant(1, 1.0);
    let w = Field::single(SeparableProduct::new(1.0, vec![Factor::Power(1)], vec![Factor::Sin(1)]).unwrap());
    let a = solve_homogenized_1d(&c, &[0.7, -0.4], &f).unwrap().weighted_functional(&w);
    let b = solve_homogenized_1d(&c, &[-0.7, 0.4], &f).unwrap().weighted_functional(&w);
    assert!(a.abs() > 1e-4 && (a + b).abs() > 0.0);
    assert!((a - b).abs() > 1e-4);
}
