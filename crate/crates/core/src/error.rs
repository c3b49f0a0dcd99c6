//! Workspace-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} not positive)")]
    NotSpd { pivot: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid schedule: {reason}")]
    InvalidSchedule { reason: String },

    #[error("degenerate step at index {step}: {reason}")]
    DegenerateStep { step: usize, reason: String },

    #[error("velocity field evaluation failed: {reason}")]
    Field { reason: String },

    #[error("unknown condition mixture `{name}`")]
    UnknownCondition { name: String },

    #[error("schedule mismatch: {detail}")]
    ScheduleMismatch { detail: String },

    #[error("invalid configuration: {}", problems.join("; "))]
    InvalidConfig { problems: Vec<String> },

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Single-problem configuration error.
    pub fn config(problem: impl Into<String>) -> Self {
        Error::InvalidConfig {
            problems: vec![problem.into()],
        }
    }
}
