//! Experiment configuration: a TOML file with one table per block.

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use twoscale_core::catalogue;
use twoscale_core::coefficient::{PriorKind, TwoScaleCoefficient};
use twoscale_core::field::Field;
use twoscale_core::observation::{Covariance, ObservationMode, ObservationSpec};
use twoscale_core::two_scale::SpaceKind;

/// A validation failure, with the 1-based line of the offending key when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentBlock,
    pub prior: PriorBlock,
    pub observation: ObservationBlock,
    pub data: DataBlock,
    pub solver: SolverBlock,
    pub mcmc: Option<McmcBlock>,
    pub rate: Option<RateBlock>,
    pub perturbation: Option<PerturbationBlock>,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub id: String,
    pub dim: usize,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorBlock {
    pub family: String,
    /// Optional restatement of the family's kind, checked against it.
    pub kind: Option<PriorName>,
    /// Term ids replacing the family's own list.
    pub terms: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorName {
    Uniform,
    LogGaussian,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationBlock {
    /// An observation-set id, or
    pub set: Option<String>,
    /// an explicit list of observation ids.
    pub ids: Option<Vec<String>>,
    pub mode: ModeName,
    /// Constant source `f`.
    #[serde(default = "one")]
    pub source: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Homogenized,
    Flux,
    TwoScaleEps,
}

impl From<ModeName> for ObservationMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Homogenized => ObservationMode::HomogenizedCorrector,
            ModeName::Flux => ObservationMode::Flux,
            ModeName::TwoScaleEps => ObservationMode::TwoScaleEps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub z_ref: Option<Vec<f64>>,
    /// Seed of a prior draw used when `z_ref` is absent.
    pub z_ref_seed: Option<u64>,
    pub noise_seed: u64,
    /// Noise variance, `Σ = variance · I`.
    pub noise_variance: Option<f64>,
    /// Diagonal of `Σ`.
    pub noise_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForwardKind {
    /// Closed-form limit in one dimension.
    #[serde(rename = "homogenized-1d")]
    Homogenized1d,
    /// Oscillating problem at `solver.eps` in one dimension.
    #[serde(rename = "epsilon-1d")]
    Epsilon1d,
    /// Two-scale Galerkin on the full or sparse space.
    TwoScaleFe,
    /// Cell problems at macro nodes, then the homogenized problem.
    CellRoute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceName {
    Full,
    Sparse,
}

impl From<SpaceName> for SpaceKind {
    fn from(s: SpaceName) -> Self {
        match s {
            SpaceName::Full => SpaceKind::Full,
            SpaceName::Sparse => SpaceKind::Sparse,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub forward: ForwardKind,
    #[serde(default = "default_level")]
    pub level: u32,
    #[serde(default = "default_level")]
    pub cell_level: u32,
    #[serde(default = "default_macro")]
    pub macro_level: u32,
    #[serde(default = "default_space")]
    pub space: SpaceName,
    #[serde(default = "default_tol")]
    pub cg_tol: f64,
    pub eps: Option<f64>,
    /// Gauss panels per ε-cell and nodes per panel for the oscillating model.
    #[serde(default = "default_panels")]
    pub panels: usize,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_level() -> u32 {
    5
}
fn default_macro() -> u32 {
    3
}
fn default_space() -> SpaceName {
    SpaceName::Sparse
}
fn default_tol() -> f64 {
    1e-10
}
fn default_panels() -> usize {
    4
}
fn default_points() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcBlock {
    pub steps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    pub seeds: Vec<u64>,
}

fn default_burn_in() -> f64 {
    twoscale_core::bayes::DEFAULT_BURN_IN
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ladder {
    /// Oscillating models at `1/ε ∈ cells` against the limit.
    Epsilon,
    /// Galerkin levels against `reference_level`.
    Level,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateBlock {
    pub ladder: Ladder,
    /// `1/ε` per rung.
    #[serde(default)]
    pub cells: Vec<u32>,
    #[serde(default)]
    pub levels: Vec<u32>,
    pub reference_level: Option<u32>,
    pub draws: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    pub seed: u64,
}

fn default_bootstrap() -> usize {
    twoscale_core::bayes::DEFAULT_BOOTSTRAP
}

/// Data perturbations `δ + t·(1, …, 1)` for the stability probe.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationBlock {
    pub sizes: Vec<f64>,
    pub draws: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
    /// Macroscopic points of the 2D field slices.
    #[serde(default)]
    pub slices: Vec<Vec<f64>>,
    /// Points per axis of the field tables.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    33
}

/// Parsed and validated configuration with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub text: String,
    coeff: Option<TwoScaleCoefficient>,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let mut loaded = LoadedConfig {
            config,
            text: text.to_string(),
            coeff: None,
        };
        loaded.coeff = loaded.build_coefficient().ok();
        loaded.validate()?;
        Ok(loaded)
    }

    fn fail(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: key_line(&self.text, section, key),
            message: format!("[{section}] {key}: {}", message.into()),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if !(1..=3).contains(&c.experiment.dim) {
            return Err(self.fail("experiment", "dim", "dimension must be 1, 2 or 3"));
        }
        let family = catalogue::family(&c.prior.family).map_err(|e| self.fail("prior", "family", e.to_string()))?;
        if family.dim != c.experiment.dim {
            return Err(self.fail(
                "prior",
                "family",
                format!("family has dimension {}, experiment has {}", family.dim, c.experiment.dim),
            ));
        }
        if let Some(kind) = c.prior.kind {
            let expected = match family.prior {
                PriorKind::Uniform => PriorName::Uniform,
                PriorKind::Gaussian => PriorName::LogGaussian,
            };
            if kind != expected {
                return Err(self.fail("prior", "kind", "does not match the family"));
            }
        }
        for t in c.prior.terms.iter().flatten() {
            catalogue::term(t).map_err(|e| self.fail("prior", "terms", e.to_string()))?;
        }
        if self.coeff.is_none() {
            let e = self.build_coefficient().err().map(|e| e.to_string()).unwrap_or_default();
            return Err(self.fail("prior", "family", e));
        }

        match (&c.observation.set, &c.observation.ids) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(self.fail("observation", "set", "give exactly one of `set` and `ids`"));
            }
            (Some(s), None) => {
                catalogue::observation_set(s).map_err(|e| self.fail("observation", "set", e.to_string()))?;
            }
            (None, Some(ids)) => {
                for i in ids {
                    catalogue::observation(i).map_err(|e| self.fail("observation", "ids", e.to_string()))?;
                }
            }
        }
        let spec = self.spec().map_err(|e| self.fail("observation", "mode", e))?;
        spec.check_dim(c.experiment.dim)
            .map_err(|e| self.fail("observation", "ids", e.to_string()))?;
        if !c.observation.source.is_finite() {
            return Err(self.fail("observation", "source", "must be finite"));
        }

        let d = &c.data;
        match (&d.z_ref, d.z_ref_seed) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(self.fail("data", "z_ref", "give exactly one of `z_ref` and `z_ref_seed`"));
            }
            (Some(z), None) if z.len() != self.n_params() => {
                return Err(self.fail("data", "z_ref", format!("expected {} entries", self.n_params())));
            }
            (Some(z), None) if family.prior == PriorKind::Uniform && z.iter().any(|v| v.abs() > 1.0) => {
                return Err(self.fail("data", "z_ref", "uniform parameters lie in [-1, 1]"));
            }
            _ => {}
        }
        self.covariance(spec.len()).map_err(|(key, e)| self.fail("data", key, e))?;

        let s = &c.solver;
        let needs_level = matches!(s.forward, ForwardKind::TwoScaleFe | ForwardKind::CellRoute);
        if needs_level && s.level < 2 {
            return Err(self.fail("solver", "level", "L must be at least 2"));
        }
        if s.forward == ForwardKind::CellRoute && s.cell_level < 2 {
            return Err(self.fail("solver", "cell_level", "L_cell must be at least 2"));
        }
        if !(s.cg_tol > 0.0 && s.cg_tol < 1.0) {
            return Err(self.fail("solver", "cg_tol", "must lie in (0, 1)"));
        }
        let one_d = matches!(s.forward, ForwardKind::Homogenized1d | ForwardKind::Epsilon1d);
        if one_d && c.experiment.dim != 1 {
            return Err(self.fail("solver", "forward", "this forward model is one-dimensional"));
        }
        let eps_mode = spec.mode == ObservationMode::TwoScaleEps;
        if (s.forward == ForwardKind::Epsilon1d) != eps_mode {
            return Err(self.fail("observation", "mode", "`two-scale-eps` goes with `epsilon-1d` and only with it"));
        }
        if s.forward == ForwardKind::Epsilon1d {
            let ok = s.eps.is_some_and(|e| e > 0.0 && e <= 1.0 && ((1.0 / e) - (1.0 / e).round()).abs() < 1e-9 / e);
            if !ok {
                return Err(self.fail("solver", "eps", "needs ε = 1/n"));
            }
        }
        if s.panels == 0 || s.points == 0 {
            return Err(self.fail("solver", "panels", "must be positive"));
        }

        if let Some(m) = &c.mcmc {
            if m.steps == 0 {
                return Err(self.fail("mcmc", "steps", "must be positive"));
            }
            if !(0.0..1.0).contains(&m.burn_in) {
                return Err(self.fail("mcmc", "burn_in", "must lie in [0, 1)"));
            }
            if m.seeds.is_empty() {
                return Err(self.fail("mcmc", "seeds", "at least one seed"));
            }
        }
        if let Some(r) = &c.rate {
            let rungs = match r.ladder {
                Ladder::Epsilon => {
                    if c.experiment.dim != 1 {
                        return Err(self.fail("rate", "ladder", "the ε ladder is one-dimensional"));
                    }
                    if r.cells.contains(&0) {
                        return Err(self.fail("rate", "cells", "must be positive"));
                    }
                    r.cells.len()
                }
                Ladder::Level => {
                    if !needs_level {
                        return Err(self.fail("solver", "forward", "a level ladder needs `two-scale-fe` or `cell-route`"));
                    }
                    let Some(reference) = r.reference_level else {
                        return Err(self.fail("rate", "reference_level", "required for a level ladder"));
                    };
                    if r.levels.iter().any(|&l| l < 2 || l >= reference) {
                        return Err(self.fail("rate", "levels", "levels must lie in [2, reference_level)"));
                    }
                    r.levels.len()
                }
            };
            if rungs < 3 {
                return Err(self.fail("rate", "ladder", "at least three rungs"));
            }
            if r.draws < 2 {
                return Err(self.fail("rate", "draws", "at least two draws"));
            }
        }
        if let Some(p) = &c.perturbation {
            if p.sizes.is_empty() || p.sizes.iter().any(|t| !(*t > 0.0)) {
                return Err(self.fail("perturbation", "sizes", "positive sizes required"));
            }
            if p.draws < 2 {
                return Err(self.fail("perturbation", "draws", "at least two draws"));
            }
        }
        let o = &c.output;
        if o.dir.is_empty() {
            return Err(self.fail("output", "dir", "must not be empty"));
        }
        if o.slices.iter().any(|x| x.len() != c.experiment.dim || x.iter().any(|v| !(0.0..=1.0).contains(v))) {
            return Err(self.fail("output", "slices", "slices are points of the unit cube"));
        }
        if o.grid < 2 {
            return Err(self.fail("output", "grid", "at least two points per axis"));
        }
        Ok(())
    }

    pub fn coefficient(&self) -> twoscale_core::Result<TwoScaleCoefficient> {
        match &self.coeff {
            Some(c) => Ok(c.clone()),
            None => self.build_coefficient(),
        }
    }

    fn build_coefficient(&self) -> twoscale_core::Result<TwoScaleCoefficient> {
        let mut family = catalogue::family(&self.config.prior.family)?;
        if let Some(t) = &self.config.prior.terms {
            family.terms = t.clone();
        }
        family.build()
    }

    pub fn prior_kind(&self) -> PriorKind {
        catalogue::family(&self.config.prior.family)
            .map(|f| f.prior)
            .unwrap_or(PriorKind::Uniform)
    }

    pub fn n_params(&self) -> usize {
        self.coeff.as_ref().map_or(0, |c| c.n_terms())
    }

    pub fn observation_ids(&self) -> Vec<String> {
        let o = &self.config.observation;
        match (&o.set, &o.ids) {
            (Some(s), _) => catalogue::observation_set(s).unwrap_or_default(),
            (None, Some(ids)) => ids.clone(),
            (None, None) => Vec::new(),
        }
    }

    pub fn spec(&self) -> Result<ObservationSpec, String> {
        self.spec_with_mode(self.config.observation.mode.into())
    }

    pub fn spec_with_mode(&self, mode: ObservationMode) -> Result<ObservationSpec, String> {
        let functionals = self
            .observation_ids()
            .iter()
            .map(|i| catalogue::observation(i))
            .collect::<twoscale_core::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        ObservationSpec::new(functionals, mode).map_err(|e| e.to_string())
    }

    pub fn source(&self) -> Field {
        Field::constant(self.config.experiment.dim, self.config.observation.source)
    }

    pub fn covariance(&self, n: usize) -> Result<Covariance, (&'static str, String)> {
        let d = &self.config.data;
        match (d.noise_variance, &d.noise_diagonal) {
            (Some(v), None) => {
                Covariance::scaled_identity(n, v).map_err(|e| ("noise_variance", e.to_string()))
            }
            (None, Some(diag)) => {
                if diag.len() != n {
                    return Err(("noise_diagonal", format!("expected {n} entries, one per observation")));
                }
                Covariance::diagonal(diag).map_err(|e| ("noise_diagonal", e.to_string()))
            }
            _ => Err((
                "noise_variance",
                "give exactly one of `noise_variance` and `noise_diagonal`".into(),
            )),
        }
    }

    /// `z_ref`, drawn from the prior when only a seed is configured.
    pub fn z_ref(&self) -> Vec<f64> {
        match (&self.config.data.z_ref, self.config.data.z_ref_seed) {
            (Some(z), _) => z.clone(),
            (None, Some(seed)) => self
                .coeff
                .as_ref()
                .map(|c| c.sample_prior(seed).into_inner())
                .unwrap_or_default(),
            (None, None) => Vec::new(),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = …` inside `[section]`, or of the section header when the key is absent.
fn key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[experiment]
id = "t"
dim = 1

[prior]
family = "family:sin-cos-1d"

[observation]
set = "obs:1d-u0-only"
mode = "homogenized"

[data]
z_ref = [0.1, 0.2]
noise_seed = 1
noise_variance = 1e-3

[solver]
forward = "homogenized-1d"

[output]
dir = "t"
"#;

    #[test]
    fn minimal_config_parses() {
        let c = LoadedConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.n_params(), 2);
        assert_eq!(c.observation_ids(), vec!["x", "x2"]);
    }

    #[test]
    fn unknown_id_is_reported_on_its_line() {
        let text = MINIMAL.replace("obs:1d-u0-only", "obs:nope");
        let e = LoadedConfig::parse(&text).unwrap_err();
        assert_eq!(e.line, Some(10));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let text = MINIMAL.replace("dim = 1", "dim = ");
        let e = LoadedConfig::parse(&text).unwrap_err();
        assert_eq!(e.line, Some(4));
    }

    #[test]
    fn a_single_level_is_rejected() {
        let text = MINIMAL.replace("forward = \"homogenized-1d\"", "forward = \"two-scale-fe\"\nlevel = 1");
        let e = LoadedConfig::parse(&text).unwrap_err();
        assert!(e.message.contains("level"), "{e}");
    }

    #[test]
    fn wrong_covariance_length_is_rejected() {
        let text = MINIMAL.replace("noise_variance = 1e-3", "noise_diagonal = [1.0]");
        assert!(LoadedConfig::parse(&text).is_err());
    }
}
