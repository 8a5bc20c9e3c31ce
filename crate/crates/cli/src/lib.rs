//! Experiment runners behind the `aircomp-dp` binary.
//!
//! Each command reads a [`Scenario`](aircomp_dp::Scenario) and writes CSV.
//! Commands are plain functions over `io::Write` so they can be driven from
//! tests without touching the filesystem.

pub mod checks;
pub mod commands;

use std::path::PathBuf;

pub use checks::{run_checks, CheckResult, Checks, ValidationReport};
pub use commands::{run_tradeoff, run_train, tradeoff_rows, train_rows, TradeoffRow, TrainRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aircomp_dp::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
