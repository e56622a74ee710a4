//! Batch front end: run configurations, sweeps, figure data and the self-test.

mod config;
mod figures;
mod run;
mod selftest;
mod svg;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::protocol::ProtocolError;

pub use config::{
    EtaTMode, MarginalMode, OutputConfig, ProtocolConfig, RunConfig, SolverConfig, SweepConfig, WeightMode,
    SCHEMA_VERSION,
};
pub use figures::{figure, FigureData, FigureName, FigureOptions};
pub use run::{exit_status, run, write_csv, ResultRow, RunReport, ScanSummary};
pub use selftest::{selftest, CheckOutcome};
pub use svg::render_svg;

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "BYPASS_QKD_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("config error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unknown figure `{0}` (expected fig3, fig4, fig5, fig6 or fig7)")]
    UnknownFigure(String),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Config { .. } | CliError::Toml(_) | CliError::UnknownFigure(_) => ExitStatus::ConfigError,
            CliError::Protocol(_) => ExitStatus::ConfigError,
            _ => ExitStatus::NumericalFailure,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    ConfigError = 1,
    NumericalFailure = 2,
    InfeasibleEverywhere = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Thread count from `BYPASS_QKD_THREADS`, falling back to `configured`.
pub fn thread_count(configured: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config { path: THREADS_ENV.into(), message: format!("`{v}` is not a positive integer") }),
        },
        Err(_) => Ok(configured),
    }
}

/// Runs `f` on a pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

#[cfg(test)]
mod tests;
