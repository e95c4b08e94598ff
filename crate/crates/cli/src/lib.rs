//! Configuration-driven experiments on top of `twoscale-core`: posterior sampling runs,
//! Hellinger rate studies, stability probes and cell/homogenization utilities.

pub mod app;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

pub use config::{ConfigError, ExperimentConfig, LoadedConfig};
pub use error::CliError;
