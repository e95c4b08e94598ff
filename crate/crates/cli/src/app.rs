//! Command-line surface.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use twoscale_core::catalogue;
use twoscale_core::coefficient::TwoScaleCoefficient;
use twoscale_core::linalg::CgOptions;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::experiment::{cell_rows, homogenize, run_experiment, run_perturbation, run_rate_study, tensor_rows};
use crate::output::fmt;

#[derive(Debug, Parser)]
#[command(name = "twoscale", version, about = "Two-scale forward models and posterior experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior and write chains, scatter, field tables and a manifest.
    Run(RunArgs),
    /// Hellinger distances along an ε or level ladder.
    RateStudy(RunArgs),
    /// Hellinger distances between posteriors for perturbed data.
    Hellinger(RunArgs),
    /// Homogenized tensor at the nodes of a macroscopic grid.
    Homogenize(CellArgs),
    /// Cell-problem solutions at one macroscopic point.
    Cell(CellArgs),
    /// Print catalogue ids with their formulas.
    ListCatalogue,
    /// Parse and check a configuration file.
    ValidateConfig { config: PathBuf },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Upper bound on worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Replaces `[output] dir`.
    #[arg(long)]
    pub output_dir: Option<String>,
}

#[derive(Debug, clap::Args)]
pub struct CellArgs {
    /// Coefficient family id.
    #[arg(long)]
    pub family: String,
    /// Parameter vector, comma separated; zeros when neither this nor `--z-seed` is given.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub z: Option<Vec<f64>>,
    /// Draw the parameters from the prior with this seed.
    #[arg(long, conflicts_with = "z")]
    pub z_seed: Option<u64>,
    /// Macroscopic point (`cell` only), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
    /// Macroscopic grid level (`homogenize` only).
    #[arg(long, default_value_t = 2)]
    pub macro_level: u32,
    #[arg(long, default_value_t = 6)]
    pub cell_level: u32,
    #[arg(long, default_value_t = 1e-10)]
    pub cg_tol: f64,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<LoadedConfig, CliError> {
    let mut cfg = LoadedConfig::from_path(&args.config)?;
    if let Some(d) = &args.output_dir {
        cfg.config.output.dir = d.clone();
    }
    Ok(cfg)
}

fn cell_setup(args: &CellArgs) -> Result<(TwoScaleCoefficient, Vec<f64>, CgOptions), CliError> {
    let coeff = catalogue::family(&args.family)
        .and_then(|f| f.build())
        .map_err(|e| CliError::config(e.to_string()))?;
    let z = match (&args.z, args.z_seed) {
        (Some(z), _) => z.clone(),
        (None, Some(s)) => coeff.sample_prior(s).into_inner(),
        (None, None) => vec![0.0; coeff.n_terms()],
    };
    if z.len() != coeff.n_terms() {
        return Err(CliError::config(format!("--z needs {} entries", coeff.n_terms())));
    }
    if args.cell_level < 2 {
        return Err(CliError::config("--cell-level must be at least 2"));
    }
    let cg = CgOptions {
        rel_tol: args.cg_tol,
        ..CgOptions::default()
    };
    Ok((coeff, z, cg))
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(CliError::csv)?;
    for r in rows {
        w.write_record(&r).map_err(CliError::csv)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => out.write_all(&bytes).map_err(io),
    }
}

fn io(e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        return CliError::Closed;
    }
    CliError::Io(e.to_string())
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let r = run_experiment(&cfg, args.jobs)?;
            for (ch, s) in r.chains.iter().zip(r.summaries()) {
                let means: Vec<String> = s.iter().map(|m| format!("{:.4}±{:.4}", m.0, m.1)).collect();
                writeln!(out, "seed {}: acceptance {:.4}, posterior {}", ch.seed, ch.acceptance_rate, means.join(" ")).map_err(io)?;
            }
            writeln!(out, "wrote {}", r.dir.display()).map_err(io)?;
        }
        Command::RateStudy(args) => {
            let cfg = load(&args)?;
            let r = run_rate_study(&cfg, args.jobs)?;
            for (x, e) in r.study.x.iter().zip(&r.study.estimates) {
                writeln!(out, "{x:<12} d = {:.5} ± {:.5}", e.distance, e.bootstrap_sd).map_err(io)?;
            }
            match &r.study.fit {
                Ok(f) => writeln!(out, "slope {:.3} ± {:.3}, monotone {}", f.slope, f.bootstrap_sd, r.study.monotone),
                Err(e) => writeln!(out, "no slope: {e}"),
            }
            .map_err(io)?;
            writeln!(out, "wrote {}", r.dir.display()).map_err(io)?;
        }
        Command::Hellinger(args) => {
            let cfg = load(&args)?;
            let r = run_perturbation(&cfg, args.jobs)?;
            for ((t, e), q) in r.sizes.iter().zip(&r.estimates).zip(r.ratios()) {
                writeln!(out, "t = {t:e}: d = {:.5} ± {:.5}, d/t = {q:.3}", e.distance, e.bootstrap_sd).map_err(io)?;
            }
            writeln!(out, "wrote {}", r.dir.display()).map_err(io)?;
        }
        Command::Homogenize(args) => {
            let (coeff, z, cg) = cell_setup(&args)?;
            let field = homogenize(&coeff, &z, args.macro_level, args.cell_level, cg)?;
            let (h, rows) = tensor_rows(&field);
            emit(out, args.out.as_ref(), h, rows)?;
        }
        Command::Cell(args) => {
            let (coeff, z, cg) = cell_setup(&args)?;
            let x = args.x.clone().unwrap_or_else(|| vec![0.5; coeff.dim()]);
            if x.len() != coeff.dim() {
                return Err(CliError::config(format!("--x needs {} entries", coeff.dim())));
            }
            let (h, rows) = cell_rows(&coeff, &z, &x, args.cell_level, cg)?;
            emit(out, args.out.as_ref(), h, rows)?;
        }
        Command::ListCatalogue => {
            for e in catalogue::list() {
                writeln!(out, "{}\t{}\t{}", e.kind.name(), e.id, e.formula).map_err(io)?;
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = LoadedConfig::from_path(&config)?;
            let c = &cfg.config;
            writeln!(
                out,
                "{}: ok ({} parameters, {} observations, forward {:?})",
                c.experiment.id,
                cfg.n_params(),
                cfg.observation_ids().len(),
                c.solver.forward
            )
            .map_err(io)?;
            let z: Vec<String> = cfg.z_ref().iter().map(|v| fmt(*v)).collect();
            writeln!(out, "z_ref = [{}]", z.join(", ")).map_err(io)?;
        }
    }
    Ok(())
}
