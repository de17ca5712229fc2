//! Experiment runner for `pathkac`: schema-validated configuration,
//! subcommand dispatch, report persistence and the acceptance suite.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod accept;
pub mod commands;
pub mod paths;
pub mod report;
pub mod schema;
pub mod specs;

use std::time::Instant;

pub use report::ExperimentReport;
pub use schema::{ExperimentConfig, Subcommand};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Bad configuration; exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    /// Numerical failure inside the library; exit code 1.
    #[error("numerical failure: {0}")]
    Numerical(#[from] pathkac::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }
}

/// Runs `cfg` and writes its report under `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<ExperimentReport, CliError> {
    let start = Instant::now();
    let report = commands::run(cfg)?;
    report.write(&cfg.output_dir, start.elapsed().as_secs_f64())?;
    Ok(report)
}
