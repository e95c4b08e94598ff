use std::path::Path;

use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("numerical failure: {0}")]
    Numerical(#[from] twoscale_core::Error),

    #[error("i/o error: {0}")]
    Io(String),

    /// Standard output was closed by the reader.
    #[error("output closed")]
    Closed,
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn csv(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(ConfigError {
            line: None,
            message: message.into(),
        })
    }

    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
            CliError::Closed => 0,
        }
    }
}
