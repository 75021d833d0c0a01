use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid organization `{name}`: {reason}")]
    InvalidOrg { name: String, reason: String },

    #[error("unknown organization `{name}` (known: {known})")]
    UnknownOrg { name: String, known: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("transient did not converge: {0}")]
    NonConvergence(String),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("underdetermined fit: {0}")]
    Underdetermined(String),

    #[error("inconsistent inputs: {0}")]
    InconsistentInputs(String),

    #[error("invalid statistics: {0}")]
    InvalidStats(String),

    #[error("trace line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("trace line {line}: cycle {cycle} is earlier than previous cycle {previous}")]
    OrderViolation { line: usize, cycle: u64, previous: u64 },

    #[error("timing violation: {0}")]
    TimingViolation(String),

    #[error("{}:{line}: {reason}", path.display())]
    FileFormat { path: PathBuf, line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
