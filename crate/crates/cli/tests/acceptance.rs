use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use twoscale::experiment::{run_experiment, run_perturbation, run_rate_study};
use twoscale::LoadedConfig;
use twoscale_core::bayes::{run_independence_sampler, Posterior, DEFAULT_BURN_IN};
use twoscale_core::catalogue;
use twoscale_core::cell::{homogenized_tensor, solve_cell_problems};
use twoscale_core::coefficient::{PriorKind, TwoScaleCoefficient};
use twoscale_core::field::{Factor, Field, SeparableProduct};
use twoscale_core::fine_scale::{corrector_error, solve_eps_1d_exact, EpsilonProblem};
use twoscale_core::forward::FnModel;
use twoscale_core::homogenized::solve_homogenized_1d;
use twoscale_core::linalg::CgOptions;
use twoscale_core::mesh::Grid;
use twoscale_core::observation::{
    forward_map_eps, forward_map_homogenized, Covariance, ForwardData, ObservationMode, ObservationSpec,
};
use twoscale_core::quadrature::Rule;
use twoscale_core::stats;
use twoscale_core::two_scale::{count_dofs, SpaceKind, TwoScaleSettings, TwoScaleSystem};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

const LADDER: [f64; 5] = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
const Z_FIXED: [f64; 2] = [0.7, -0.4];

fn sin_cos() -> TwoScaleCoefficient {
    catalogue::family("family:sin-cos-1d").unwrap().build().unwrap()
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn within(t: Instant, limit: u64) -> (bool, Duration) {
    let e = t.elapsed();
    (e < Duration::from_secs(limit), e)
}

fn preset(name: &str, out: &Path) -> Result<LoadedConfig, Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ci").join(format!("{name}.toml"));
    let mut cfg = LoadedConfig::from_path(&path)?;
    cfg.config.output.dir = out.join(name).to_string_lossy().into_owned();
    Ok(cfg)
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn c1_sine_cell() -> Outcome {
    let t = Instant::now();
    let c = TwoScaleCoefficient::uniform(
        Field::constant(1, 9.0),
        vec![SeparableProduct::new(1.0, vec![Factor::One], vec![Factor::Sin(1)])?],
        None,
    )?;
    let cells = solve_cell_problems(&c, &[1.0], Grid::boxed(1, 0), 10, CgOptions::default())?;
    let a0 = homogenized_tensor(&c, &[1.0], &cells)?.at_node(0)[0];
    let err = (a0 - 80f64.sqrt()).abs();
    let (fast, e) = within(t, 1);
    Ok((err < 1e-6 && fast, format!("|A0 - sqrt(80)| = {err:.2e} (< 1e-6), {e:.2?} (< 1 s)")))
}

fn c2_laminate() -> Outcome {
    let t = Instant::now();
    let lam = Factor::Laminate { width: 0.02 };
    let mean = Field::new(
        2,
        vec![
            SeparableProduct::constant(2, 1.0),
            SeparableProduct::new(9.0, vec![Factor::One, Factor::One], vec![lam, Factor::One])?,
        ],
    )?;
    let c = TwoScaleCoefficient::uniform(mean, vec![], None)?;
    let cells = solve_cell_problems(&c, &[], Grid::boxed(2, 0), 7, CgOptions::default())?;
    let a0 = homogenized_tensor(&c, &[], &cells)?.at_node(0).to_vec();
    let profile = |s: f64| 1.0 + 9.0 * lam.eval(s);
    let rule = Rule::gauss(5).composite(0.0, 1.0, 4000);
    let harmonic = 1.0 / rule.integrate(|s| 1.0 / profile(s));
    let arithmetic = rule.integrate(profile);
    let (r0, r1) = (a0[0] / harmonic - 1.0, a0[3] / arithmetic - 1.0);
    let (fast, e) = within(t, 30);
    Ok((
        r0.abs() < 0.01 && r1.abs() < 0.01 && fast,
        format!("relative errors {r0:.2e}, {r1:.2e} (< 1e-2), {e:.2?} (< 30 s)"),
    ))
}

fn c3_corrector_rate() -> Outcome {
    let t = Instant::now();
    let c = sin_cos();
    let f = Field::constant(1, 1.0);
    let limit = solve_homogenized_1d(&c, &Z_FIXED, &f)?;
    let mut errs = Vec::new();
    for eps in LADDER {
        let fine = solve_eps_1d_exact(EpsilonProblem::new(&c, &Z_FIXED, eps, &f, 64)?)?;
        errs.push(corrector_error(&fine, eps, &limit, (16.0 / eps).round() as usize)?);
    }
    let slope = stats::loglog_slope(&LADDER, &errs);
    let (fast, e) = within(t, 120);
    Ok((slope >= 0.5 && fast, format!("slope {slope:.3} (>= 0.5), errors {}, {e:.2?}", sci(&errs))))
}

fn c4_forward_map() -> Outcome {
    let t = Instant::now();
    let c = sin_cos();
    let f = Field::constant(1, 1.0);
    let ids = catalogue::observation_set("obs:1d-u0u1")?;
    let functionals = ids.iter().map(|i| catalogue::observation(i)).collect::<Result<Vec<_>, _>>()?;
    let eps_spec = ObservationSpec::new(functionals.clone(), ObservationMode::TwoScaleEps)?;
    let lim_spec = ObservationSpec::new(functionals, ObservationMode::HomogenizedCorrector)?;
    let g0 = forward_map_homogenized(&lim_spec, &solve_homogenized_1d(&c, &Z_FIXED, &f)?)?;
    let mut diffs = Vec::new();
    for eps in LADDER {
        let fine = solve_eps_1d_exact(EpsilonProblem::new(&c, &Z_FIXED, eps, &f, 64)?)?;
        let ge = forward_map_eps(&eps_spec, &fine)?;
        diffs.push(ge.iter().zip(&g0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
    }
    let slope = stats::loglog_slope(&LADDER, &diffs);
    let mono = decreasing(&diffs);
    let (fast, e) = within(t, 120);
    Ok((
        slope >= 0.5 && mono && fast,
        format!("slope {slope:.3} (>= 0.5), monotone {mono}, |G^eps - G^0| {}, {e:.2?}", sci(&diffs)),
    ))
}

fn c5_sparse_vs_full() -> Outcome {
    let t = Instant::now();
    let c = sin_cos();
    let f = Field::constant(1, 1.0);
    let reference_level = 9;
    let reference = TwoScaleSystem::assemble(&c, &Z_FIXED, &f, TwoScaleSettings::new(reference_level, SpaceKind::Full))?;
    let exact = reference.solve()?;
    let levels: Vec<u32> = (3..=7).collect();
    let mut errs = [Vec::new(), Vec::new()];
    for &l in &levels {
        for (k, space) in [SpaceKind::Full, SpaceKind::Sparse].into_iter().enumerate() {
            let sol = TwoScaleSystem::assemble(&c, &Z_FIXED, &f, TwoScaleSettings::new(l, space))?.solve()?;
            let (u0, u1) = sol.prolong(reference_level);
            let d0: Vec<f64> = u0.iter().zip(&exact.u0).map(|(a, b)| a - b).collect();
            let d1: Vec<f64> = u1.iter().zip(&exact.u1).map(|(a, b)| a - b).collect();
            errs[k].push(reference.energy(&d0, &d1).max(0.0).sqrt());
        }
    }
    let orders: Vec<f64> = errs[0].windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let orders_ok = orders.iter().all(|o| (o - 1.0).abs() <= 0.2);
    let worst = errs[1].iter().zip(&errs[0]).map(|(s, f)| s / f).fold(0.0, f64::max);
    let ratios: Vec<f64> = levels
        .iter()
        .map(|&l| {
            let n = count_dofs(1, l);
            n.sparse() as f64 / n.full() as f64
        })
        .collect();
    let at6 = ratios[3];
    let (fast, e) = within(t, 300);
    Ok((
        orders_ok && worst <= 2.5 && at6 <= 0.5 && decreasing(&ratios) && fast,
        format!(
            "full orders {orders:.3?} (1 ± 0.2), max sparse/full error {worst:.3} (<= 2.5), \
             DOF ratio at L=6 {at6:.3} (<= 0.5), ratios {ratios:.3?}, {e:.2?}"
        ),
    ))
}

fn c6_eps_rate(out: &Path) -> Outcome {
    let t = Instant::now();
    let r = run_rate_study(&preset("rate_study_1d", out)?, jobs())?;
    let d: Vec<f64> = r.study.estimates.iter().map(|e| e.distance).collect();
    let fit = r.study.fit.map_err(|e| e.to_string())?;
    let (fast, e) = within(t, 600);
    Ok((
        fit.slope - fit.bootstrap_sd >= 0.4 && r.study.monotone && fast,
        format!(
            "slope {:.3} ± {:.3} (slope - sd >= 0.4), monotone {}, d {d:.4?}, {e:.2?}",
            fit.slope, fit.bootstrap_sd, r.study.monotone
        ),
    ))
}

fn c7_level_ladder(out: &Path) -> Outcome {
    let r = run_rate_study(&preset("rate_study_levels_1d", out)?, jobs())?;
    let d: Vec<f64> = r.study.estimates.iter().map(|e| e.distance).collect();
    Ok((r.study.monotone, format!("monotone {}, d {d:.4?}", r.study.monotone)))
}

fn c8_circle(out: &Path) -> Outcome {
    let t = Instant::now();
    let r = run_experiment(&preset("1d_u0_only", out)?, jobs())?;
    let radius = r.z_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut near = 0usize;
    let mut total = 0usize;
    let mut sd = f64::INFINITY;
    for chain in &r.chains {
        let (a, b) = (chain.coordinate(0, r.burn_in), chain.coordinate(1, r.burn_in));
        near += a.iter().zip(&b).filter(|(x, y)| ((*x * *x + *y * *y).sqrt() - radius).abs() <= 0.05).count();
        total += a.len();
        sd = sd.min(stats::std_dev(&a)).min(stats::std_dev(&b));
    }
    let frac = near as f64 / total as f64;
    let (fast, e) = within(t, 300);
    Ok((
        frac >= 0.9 && sd > 0.3 && fast,
        format!("fraction near |z| = {radius:.4}: {frac:.4} (>= 0.9), min sd {sd:.3} (> 0.3), {e:.2?}"),
    ))
}

fn c9_recovery(out: &Path) -> Outcome {
    let r = run_experiment(&preset("1d_u0u1", out)?, jobs())?;
    let dist: Vec<f64> = r
        .summaries()
        .iter()
        .map(|s| s.iter().zip(&r.z_ref).map(|((m, _), z)| (m - z) * (m - z)).sum::<f64>().sqrt())
        .collect();
    Ok((
        dist.len() == 3 && dist.iter().all(|d| *d < 0.15),
        format!("distances of the posterior means to z_ref {dist:.4?} (< 0.15, 3 seeds)"),
    ))
}

fn c10_flux(out: &Path) -> Outcome {
    let r = run_experiment(&preset("1d_flux", out)?, jobs())?;
    let sd = r.summaries().iter().flatten().map(|(_, s)| *s).fold(0.0, f64::max);
    Ok((sd > 0.3, format!("largest posterior sd {sd:.3} (> 0.3)")))
}

fn c11_perturbation(out: &Path) -> Outcome {
    let r = run_perturbation(&preset("perturbation_1d", out)?, jobs())?;
    let ratios = r.ratios();
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((lo > 0.0 && hi / lo <= 3.0, format!("d/t {ratios:.4?}, max/min {:.3} (<= 3)", hi / lo)))
}

fn c12_toy_chain() -> Outcome {
    let t = Instant::now();
    let data = ForwardData::new(vec![0.0], Covariance::scaled_identity(1, 0.25)?)?;
    let model = FnModel {
        n_obs: 1,
        n_params: 1,
        f: |z: &[f64]| Ok(z.to_vec()),
    };
    let post = Posterior::new(PriorKind::Uniform, model, data)?;
    let chain = run_independence_sampler(&post, 100_000, 3)?;
    let density = |z: f64| (-2.0 * z * z).exp();
    let total = Rule::gauss(10).composite(-1.0, 1.0, 40).integrate(density);
    let cdf = |s: f64| {
        if s <= -1.0 {
            0.0
        } else {
            Rule::gauss(10).composite(-1.0, s.min(1.0), 20).integrate(density) / total
        }
    };
    let ks = stats::ks_distance(&chain.coordinate(0, DEFAULT_BURN_IN), cdf);
    let (fast, e) = within(t, 30);
    Ok((ks < 0.02 && fast, format!("KS {ks:.4} (< 0.02), {e:.2?} (< 30 s)")))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let out: PathBuf = tmp.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("homogenized tensor of 9 + sin 2πy", Box::new(c1_sine_cell)),
        ("laminate tensor", Box::new(c2_laminate)),
        ("corrector rate", Box::new(c3_corrector_rate)),
        ("forward map convergence in ε", Box::new(c4_forward_map)),
        ("sparse versus full tensor Galerkin", Box::new(c5_sparse_vs_full)),
        ("Hellinger rate in ε", Box::new(|| c6_eps_rate(&out))),
        ("Hellinger level ladder", Box::new(|| c7_level_ladder(&out))),
        ("macroscopic-only posterior on a circle", Box::new(|| c8_circle(&out))),
        ("recovery with y-dependent weights", Box::new(|| c9_recovery(&out))),
        ("flux observations", Box::new(|| c10_flux(&out))),
        ("data perturbation", Box::new(|| c11_perturbation(&out))),
        ("independence sampler on a toy posterior", Box::new(c12_toy_chain)),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("criterion {:2} {}: {name}: {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
