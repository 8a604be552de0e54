//! Experiment harness for `bsde-lms`: convergence sweeps with fitted orders,
//! moment-order studies, local truncation sweeps and stability amplification
//! studies, plus the CSV format and the command-line front end.

pub mod cli;
pub mod report;
pub mod study;

pub use report::{fit_order, read_csv, write_csv, ConvergenceReport, ConvergenceRow};
pub use study::{
    convergence_sweep, moment_order_study, stability_study, truncation_sweep, StabilityReport,
    StabilityRow, SweepConfig, TruncationReport, Verdict,
};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Solver(#[from] bsde_lms::Error),
    #[error("slope fit needs at least 2 usable rows, found {0}")]
    FitUnavailable(usize),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("csv: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
