//! Command-line front end for the tractor-trailer tracking simulator:
//! configuration files, `steps.csv` logging, summaries, plot data and timing.

pub mod bench;
pub mod commands;
pub mod config;
pub mod report;
pub mod steps_csv;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed steps.csv: {0}")]
    Csv(String),
    #[error("run failed at step {step}: {error}")]
    RunFailed {
        step: usize,
        error: tractor_mpc::Error,
    },
    #[error("trajectory validation failed")]
    ValidationFailed,
}

impl From<tractor_mpc::Error> for CliError {
    fn from(e: tractor_mpc::Error) -> Self {
        Self::Config(e.to_string())
    }
}

impl CliError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}
