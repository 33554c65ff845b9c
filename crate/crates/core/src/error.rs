use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
///
/// Solver non-convergence is never an error: it is reported as data in
/// [`crate::equilibrium::NashResult`] and [`crate::mechanism::SolverMeta`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("driver index {index} out of range for {n} drivers")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A value violates its domain. `field` names the offending field,
    /// e.g. `theta[3]` or `weights diagonal`.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("constraint violated at the zero profile ({value} > budget {budget})")]
    Infeasible { value: f64, budget: f64 },

    #[error("brute-force oracle supports at most 3 drivers, got {0}")]
    TooManyDrivers(usize),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
