//! Experiment runners behind the subcommands.

use std::collections::BTreeMap;
use std::path::PathBuf;

use twoscale_core::bayes::{
    hellinger_rate_study, hellinger_with_bootstrap, posterior_field_moments, potentials_at, prior_draws,
    run_independence_sampler, Chain, HellingerEstimate, Posterior, RateStudy,
};
use twoscale_core::cell::{homogenized_tensor, solve_cell_problem_at, HomogenizedTensorField};
use twoscale_core::coefficient::TwoScaleCoefficient;
use twoscale_core::forward::{CellRouteModel, ForwardModel, Quadrature1dModel, TwoScaleFeModel};
use twoscale_core::linalg::CgOptions;
use twoscale_core::mesh::Grid;
use twoscale_core::observation::{potential, synthesize_data, ForwardData, ObservationMode};
use twoscale_core::two_scale::TwoScaleSettings;

use crate::config::{ForwardKind, Ladder, LoadedConfig};
use crate::error::CliError;
use crate::output::{fmt, resolve_output_dir, Bundle, Manifest};

pub type DynModel = Box<dyn ForwardModel + Send + Sync>;

/// Slices of the 2D field plots when none are configured.
pub const DEFAULT_SLICES: [[f64; 2]; 3] = [[0.2, 0.2], [0.25, 0.25], [0.25, 0.75]];

fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// The limit-mode counterpart of an observation mode.
fn limit_mode(mode: ObservationMode) -> ObservationMode {
    match mode {
        ObservationMode::TwoScaleEps => ObservationMode::HomogenizedCorrector,
        m => m,
    }
}

/// The ε-mode counterpart of an observation mode.
fn eps_mode(mode: ObservationMode) -> ObservationMode {
    match mode {
        ObservationMode::HomogenizedCorrector => ObservationMode::TwoScaleEps,
        m => m,
    }
}

/// Builds a forward model of `kind`; `level` overrides the configured Galerkin level and `eps`
/// the configured ε.
pub fn build_model(
    cfg: &LoadedConfig,
    kind: ForwardKind,
    level: Option<u32>,
    eps: Option<f64>,
) -> Result<DynModel, CliError> {
    let coeff = cfg.coefficient()?;
    let source = cfg.source();
    let s = &cfg.config.solver;
    let mode: ObservationMode = cfg.config.observation.mode.into();
    let spec = |m: ObservationMode| cfg.spec_with_mode(m).map_err(CliError::config);
    let level = level.unwrap_or(s.level);
    let cg = CgOptions {
        rel_tol: s.cg_tol,
        ..CgOptions::default()
    };
    Ok(match kind {
        ForwardKind::Homogenized1d => Box::new(Quadrature1dModel::homogenized(&coeff, &source, &spec(limit_mode(mode))?)?),
        ForwardKind::Epsilon1d => {
            let eps = eps.or(s.eps).ok_or_else(|| CliError::config("[solver] eps is required"))?;
            Box::new(Quadrature1dModel::epsilon(&coeff, &source, &spec(eps_mode(mode))?, eps, s.panels, s.points)?)
        }
        ForwardKind::TwoScaleFe => {
            let mut settings = TwoScaleSettings::new(level, s.space.into());
            settings.cg.rel_tol = s.cg_tol;
            Box::new(TwoScaleFeModel::new(coeff, source, spec(limit_mode(mode))?, settings)?)
        }
        ForwardKind::CellRoute => {
            let mut m = CellRouteModel::new(coeff, source, spec(limit_mode(mode))?, s.macro_level, s.cell_level, level)?;
            m.cg = cg;
            Box::new(m)
        }
    })
}

/// The model that generates synthetic data: the closed-form limit in one dimension, the
/// configured limit model otherwise.
pub fn data_model(cfg: &LoadedConfig) -> Result<DynModel, CliError> {
    if cfg.config.experiment.dim == 1 {
        build_model(cfg, ForwardKind::Homogenized1d, None, None)
    } else {
        build_model(cfg, cfg.config.solver.forward, None, None)
    }
}

/// Noisy data `δ = G(z_ref) + η`.
pub fn make_data(cfg: &LoadedConfig) -> Result<ForwardData, CliError> {
    let z_ref = cfg.z_ref();
    let clean = data_model(cfg)?.evaluate(&z_ref)?;
    let sigma = cfg
        .covariance(clean.len())
        .map_err(|(k, e)| CliError::config(format!("[data] {k}: {e}")))?;
    Ok(synthesize_data(clean, &z_ref, sigma, cfg.config.data.noise_seed)?)
}

/// Runs `f` over `items` on at most `jobs` threads, keeping the input order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<R, CliError> + Sync,
) -> Result<Vec<R>, CliError> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let parts: Vec<Result<Vec<R>, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>, CliError>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub z_ref: Vec<f64>,
    pub data: ForwardData,
    pub chains: Vec<Chain>,
    pub burn_in: f64,
}

impl RunOutcome {
    /// Per-chain `(mean, sd)` of every coordinate after burn-in.
    pub fn summaries(&self) -> Vec<Vec<(f64, f64)>> {
        self.chains.iter().map(|c| c.summary(self.burn_in)).collect()
    }
}

fn header(prefix: &[&str], j: usize, suffix: &[&str]) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend((1..=j).map(|k| format!("z_{k}")));
    h.extend(suffix.iter().map(|s| s.to_string()));
    h
}

fn write_header_owned(
    bundle: &mut Bundle,
    name: &str,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    bundle.write_csv(name, &h, rows)?;
    Ok(())
}

fn unit_points(n: usize, periodic: bool) -> Vec<f64> {
    let div = if periodic { n } else { n - 1 };
    (0..n).map(|i| i as f64 / div as f64).collect()
}

fn product_points(axis: &[f64], dim: usize) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = vec![vec![]];
    for _ in 0..dim {
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Mean and variance of the coefficient pooled over equally long chains.
fn pooled_moments(
    chains: &[Chain],
    coeff: &TwoScaleCoefficient,
    xs: &[f64],
    ys: &[f64],
    burn_in: f64,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut mean: Vec<f64> = Vec::new();
    let mut second: Vec<f64> = Vec::new();
    let k = chains.len() as f64;
    for c in chains {
        let (m, v) = posterior_field_moments(c, coeff, xs, ys, burn_in)?;
        if mean.is_empty() {
            mean = vec![0.0; m.len()];
            second = vec![0.0; m.len()];
        }
        for i in 0..m.len() {
            mean[i] += m[i] / k;
            second[i] += (v[i] + m[i] * m[i]) / k;
        }
    }
    let var = mean.iter().zip(&second).map(|(m, s)| (s - m * m).max(0.0)).collect();
    Ok((mean, var))
}

fn write_field(
    bundle: &mut Bundle,
    name: &str,
    coeff: &TwoScaleCoefficient,
    z_ref: &[f64],
    chains: &[Chain],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    burn_in: f64,
) -> Result<(), CliError> {
    let d = coeff.dim();
    let xf: Vec<f64> = xs.iter().flatten().copied().collect();
    let yf: Vec<f64> = ys.iter().flatten().copied().collect();
    let reference = coeff.tabulate(z_ref, &xf, &yf);
    let (mean, var) = pooled_moments(chains, coeff, &xf, &yf, burn_in)?;
    let mut h: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    h.extend((1..=d).map(|k| format!("y_{k}")));
    h.extend(["reference", "posterior_mean", "posterior_sd"].map(String::from));
    let mut rows = Vec::with_capacity(reference.len());
    for (ix, x) in xs.iter().enumerate() {
        for (iy, y) in ys.iter().enumerate() {
            let k = ix * ys.len() + iy;
            let mut r: Vec<String> = x.iter().chain(y).map(|v| fmt(*v)).collect();
            r.push(fmt(reference[k]));
            r.push(fmt(mean[k]));
            r.push(fmt(var[k].sqrt()));
            rows.push(r);
        }
    }
    write_header_owned(bundle, name, &h, rows)
}

/// Posterior sampling: chains, scatter, field tables, data and manifest.
pub fn run_experiment(cfg: &LoadedConfig, jobs: usize) -> Result<RunOutcome, CliError> {
    let c = &cfg.config;
    let mcmc = c
        .mcmc
        .as_ref()
        .ok_or_else(|| CliError::config("`run` needs an [mcmc] block"))?;
    let coeff = cfg.coefficient()?;
    let data = make_data(cfg)?;
    let z_ref = cfg.z_ref();
    let model = build_model(cfg, c.solver.forward, None, None)?;
    let post = Posterior::new(cfg.prior_kind(), model, data.clone())?;
    let chains = parallel_map(&mcmc.seeds, jobs, |&s| Ok(run_independence_sampler(&post, mcmc.steps, s)?))?;

    let dir = resolve_output_dir(&c.output.dir);
    let mut bundle = Bundle::create(dir.clone())?;
    let j = coeff.n_terms();
    let clean = data_model(cfg)?.evaluate(&z_ref)?;
    let sd: Vec<f64> = (0..data.len()).map(|i| data.sigma.matrix()[i * data.len() + i].sqrt()).collect();
    bundle.write_csv(
        "data.csv",
        &["index", "clean", "delta", "noise_sd"],
        (0..data.len()).map(|i| [i.to_string(), fmt(clean[i]), fmt(data.delta[i]), fmt(sd[i])]),
    )?;
    write_header_owned(
        &mut bundle,
        "z_ref.csv",
        &header(&[], j, &[]),
        [z_ref.iter().map(|v| fmt(*v)).collect::<Vec<_>>()],
    )?;
    for ch in &chains {
        let rows = (0..ch.len()).map(|s| {
            let mut r = vec![s.to_string(), (ch.accepted[s] as u8).to_string(), fmt(ch.potentials[s])];
            r.extend(ch.state(s).iter().map(|v| fmt(*v)));
            r
        });
        write_header_owned(
            &mut bundle,
            &format!("chain_seed{}.csv", ch.seed),
            &header(&["step", "accepted", "potential"], j, &[]),
            rows,
        )?;
        let shown = j.min(2);
        let rows = (0..ch.len()).map(|s| {
            let mut r: Vec<String> = ch.state(s)[..shown].iter().map(|v| fmt(*v)).collect();
            r.push(fmt(ch.potentials[s]));
            r
        });
        write_header_owned(
            &mut bundle,
            &format!("scatter_seed{}.csv", ch.seed),
            &header(&[], shown, &["potential"]),
            rows,
        )?;
    }
    let mut rows = Vec::new();
    for ch in &chains {
        for (k, (m, s)) in ch.summary(mcmc.burn_in).iter().enumerate() {
            rows.push([
                ch.seed.to_string(),
                (k + 1).to_string(),
                fmt(*m),
                fmt(*s),
                fmt(z_ref[k]),
                fmt(ch.acceptance_rate),
            ]);
        }
    }
    bundle.write_csv(
        "summary.csv",
        &["seed", "coordinate", "posterior_mean", "posterior_sd", "z_ref", "acceptance_rate"],
        rows,
    )?;

    let d = c.experiment.dim;
    let grid = c.output.grid;
    let ys = product_points(&unit_points(grid, true), d);
    if d == 1 {
        let xs = product_points(&unit_points(grid, false), 1);
        write_field(&mut bundle, "field.csv", &coeff, &z_ref, &chains, &xs, &ys, mcmc.burn_in)?;
    } else {
        let slices: Vec<Vec<f64>> = if c.output.slices.is_empty() {
            DEFAULT_SLICES.iter().map(|s| s[..d.min(2)].to_vec()).filter(|s| s.len() == d).collect()
        } else {
            c.output.slices.clone()
        };
        for (k, x) in slices.iter().enumerate() {
            write_field(
                &mut bundle,
                &format!("field_slice{}.csv", k + 1),
                &coeff,
                &z_ref,
                &chains,
                std::slice::from_ref(x),
                &ys,
                mcmc.burn_in,
            )?;
        }
    }

    let mut facts = BTreeMap::new();
    facts.insert("forward".into(), format!("{:?}", c.solver.forward));
    facts.insert("steps".into(), mcmc.steps.to_string());
    facts.insert("burn_in".into(), fmt(mcmc.burn_in));
    facts.insert("noise_seed".into(), c.data.noise_seed.to_string());
    facts.insert("family".into(), c.prior.family.clone());
    if let Some(s) = c.data.z_ref_seed {
        facts.insert("z_ref_seed".into(), s.to_string());
    }
    bundle.finish(Manifest {
        experiment: c.experiment.id.clone(),
        command: "run".into(),
        version: version(),
        seeds: mcmc.seeds.clone(),
        n_params: j,
        n_obs: data.len(),
        facts,
        files: vec![],
    })?;
    Ok(RunOutcome {
        dir,
        z_ref,
        data,
        chains,
        burn_in: mcmc.burn_in,
    })
}

pub struct RateOutcome {
    pub dir: PathBuf,
    pub study: RateStudy,
}

/// Hellinger distances along an ε or level ladder from shared prior draws.
pub fn run_rate_study(cfg: &LoadedConfig, jobs: usize) -> Result<RateOutcome, CliError> {
    let c = &cfg.config;
    let rate = c
        .rate
        .as_ref()
        .ok_or_else(|| CliError::config("`rate-study` needs a [rate] block"))?;
    let data = make_data(cfg)?;
    let j = cfg.n_params();
    let draws = prior_draws(cfg.prior_kind(), j, rate.draws, rate.seed);
    let potentials = |m: DynModel| -> Result<Vec<f64>, CliError> {
        let post = Posterior::new(cfg.prior_kind(), m, data.clone())?;
        Ok(potentials_at(&post, &draws)?)
    };
    // rung index, `None` for the reference
    let (x, rungs): (Vec<f64>, Vec<Option<usize>>) = match rate.ladder {
        Ladder::Epsilon => (
            rate.cells.iter().map(|n| 1.0 / *n as f64).collect(),
            (0..rate.cells.len()).map(Some).chain([None]).collect(),
        ),
        Ladder::Level => (
            rate.levels.iter().map(|l| 0.5f64.powi(*l as i32)).collect(),
            (0..rate.levels.len()).map(Some).chain([None]).collect(),
        ),
    };
    let phis = parallel_map(&rungs, jobs, |r| {
        let m = match (rate.ladder, r) {
            (Ladder::Epsilon, Some(k)) => build_model(cfg, ForwardKind::Epsilon1d, None, Some(1.0 / rate.cells[*k] as f64))?,
            (Ladder::Epsilon, None) => build_model(cfg, ForwardKind::Homogenized1d, None, None)?,
            (Ladder::Level, Some(k)) => build_model(cfg, c.solver.forward, Some(rate.levels[*k]), None)?,
            (Ladder::Level, None) => build_model(cfg, c.solver.forward, rate.reference_level, None)?,
        };
        potentials(m)
    })?;
    let (reference, rung_phis) = phis.split_last().expect("at least one model");
    let study = hellinger_rate_study(&x, reference, rung_phis, rate.bootstrap, rate.seed)?;

    let dir = resolve_output_dir(&c.output.dir);
    let mut bundle = Bundle::create(dir.clone())?;
    bundle.write_csv(
        "rate.csv",
        &["x", "distance", "bootstrap_sd", "ci_low", "ci_high", "draws"],
        x.iter().zip(&study.estimates).map(|(x, e)| {
            [fmt(*x), fmt(e.distance), fmt(e.bootstrap_sd), fmt(e.ci.0), fmt(e.ci.1), e.n.to_string()]
        }),
    )?;
    let fit_row = match &study.fit {
        Ok(f) => [fmt(f.slope), fmt(f.bootstrap_sd), study.monotone.to_string(), "ok".to_string()],
        Err(e) => ["".into(), "".into(), study.monotone.to_string(), e.to_string()],
    };
    bundle.write_csv("rate_fit.csv", &["slope", "bootstrap_sd", "monotone", "status"], [fit_row])?;
    let mut facts = BTreeMap::new();
    facts.insert("ladder".into(), format!("{:?}", rate.ladder));
    facts.insert("draws".into(), rate.draws.to_string());
    facts.insert("bootstrap".into(), rate.bootstrap.to_string());
    facts.insert("noise_seed".into(), c.data.noise_seed.to_string());
    if let Some(l) = rate.reference_level {
        facts.insert("reference_level".into(), l.to_string());
    }
    bundle.finish(Manifest {
        experiment: c.experiment.id.clone(),
        command: "rate-study".into(),
        version: version(),
        seeds: vec![rate.seed],
        n_params: j,
        n_obs: data.len(),
        facts,
        files: vec![],
    })?;
    Ok(RateOutcome { dir, study })
}

pub struct PerturbationOutcome {
    pub dir: PathBuf,
    pub sizes: Vec<f64>,
    pub estimates: Vec<HellingerEstimate>,
}

impl PerturbationOutcome {
    /// `d̂ / t` per perturbation size.
    pub fn ratios(&self) -> Vec<f64> {
        self.sizes.iter().zip(&self.estimates).map(|(t, e)| e.distance / t).collect()
    }
}

/// Distances between the posterior for `δ` and for `δ + t·(1, …, 1)`, from shared draws.
pub fn run_perturbation(cfg: &LoadedConfig, jobs: usize) -> Result<PerturbationOutcome, CliError> {
    let c = &cfg.config;
    let p = c
        .perturbation
        .as_ref()
        .ok_or_else(|| CliError::config("`hellinger` needs a [perturbation] block"))?;
    let data = make_data(cfg)?;
    let model = build_model(cfg, c.solver.forward, None, None)?;
    let j = cfg.n_params();
    let draws = prior_draws(cfg.prior_kind(), j, p.draws, p.seed);
    let zs: Vec<&[f64]> = draws.chunks(j.max(1)).collect();
    // the forward map is evaluated once per draw and shared by every δ
    let g = parallel_map(&zs, jobs, |z| Ok(model.evaluate(z)?))?;
    let phi = |d: &ForwardData| -> Result<Vec<f64>, CliError> {
        g.iter().map(|v| potential(v, d).map_err(CliError::from)).collect()
    };
    let base = phi(&data)?;
    let mut estimates = Vec::with_capacity(p.sizes.len());
    for (k, t) in p.sizes.iter().enumerate() {
        let mut moved = data.clone();
        moved.delta.iter_mut().for_each(|v| *v += t);
        estimates.push(hellinger_with_bootstrap(&phi(&moved)?, &base, p.bootstrap, p.seed.wrapping_add(k as u64))?);
    }
    let out = PerturbationOutcome {
        dir: resolve_output_dir(&c.output.dir),
        sizes: p.sizes.clone(),
        estimates,
    };
    let mut bundle = Bundle::create(out.dir.clone())?;
    bundle.write_csv(
        "perturbation.csv",
        &["size", "distance", "bootstrap_sd", "ratio"],
        out.sizes
            .iter()
            .zip(&out.estimates)
            .zip(out.ratios())
            .map(|((t, e), r)| [fmt(*t), fmt(e.distance), fmt(e.bootstrap_sd), fmt(r)]),
    )?;
    let mut facts = BTreeMap::new();
    facts.insert("draws".into(), p.draws.to_string());
    facts.insert("noise_seed".into(), c.data.noise_seed.to_string());
    bundle.finish(Manifest {
        experiment: c.experiment.id.clone(),
        command: "hellinger".into(),
        version: version(),
        seeds: vec![p.seed],
        n_params: j,
        n_obs: data.len(),
        facts,
        files: vec![],
    })?;
    Ok(out)
}

/// `A⁰` at the nodes of a level-`macro_level` grid.
pub fn homogenize(
    coeff: &TwoScaleCoefficient,
    z: &[f64],
    macro_level: u32,
    cell_level: u32,
    cg: CgOptions,
) -> Result<HomogenizedTensorField, CliError> {
    let cells = twoscale_core::cell::solve_cell_problems(coeff, z, Grid::boxed(coeff.dim(), macro_level), cell_level, cg)?;
    Ok(homogenized_tensor(coeff, z, &cells)?)
}

/// Rows `x_1.., a_11, a_12, ..` of a homogenized tensor field.
pub fn tensor_rows(field: &HomogenizedTensorField) -> (Vec<String>, Vec<Vec<String>>) {
    let d = field.dim();
    let mut h: Vec<String> = (1..=d).map(|k| format!("x_{k}")).collect();
    for a in 1..=d {
        for b in 1..=d {
            h.push(format!("a_{a}{b}"));
        }
    }
    let rows = (0..field.macro_grid.n_nodes())
        .map(|n| {
            let x = field.macro_grid.node_coords(n);
            x[..d].iter().chain(field.at_node(n)).map(|v| fmt(*v)).collect()
        })
        .collect();
    (h, rows)
}

/// Rows `y_1.., w_1..` of the cell solutions at `x`.
pub fn cell_rows(
    coeff: &TwoScaleCoefficient,
    z: &[f64],
    x: &[f64],
    level: u32,
    cg: CgOptions,
) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let d = coeff.dim();
    let (ws, _) = solve_cell_problem_at(coeff, z, x, level, cg)?;
    let g = Grid::torus(d, level);
    let mut h: Vec<String> = (1..=d).map(|k| format!("y_{k}")).collect();
    h.extend((1..=d).map(|k| format!("w_{k}")));
    let rows = (0..g.n_nodes())
        .map(|n| {
            let y = g.node_coords(n);
            y[..d]
                .iter()
                .copied()
                .chain(ws.iter().map(|w| w[n]))
                .map(fmt)
                .collect()
        })
        .collect();
    Ok((h, rows))
}
