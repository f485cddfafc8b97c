//! Experiment runner for `pricelab-core`: TOML configuration, parallel
//! replications and CSV result files.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;

/// Failure of a command, mapped to a process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<pricelab_core::Error> for CliError {
    fn from(e: pricelab_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
