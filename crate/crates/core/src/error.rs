use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid problem: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<crate::model::Violation>),

    #[error("numerical failure at iteration {iteration}: {reason}")]
    NumericalFailure { iteration: usize, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch(_) => "dimension-mismatch",
            Error::InvalidProblem(_) => "invalid-problem",
            Error::NumericalFailure { .. } => "numerical-failure",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::Parse { .. } => "parse-error",
            Error::Io { .. } => "io-error",
        }
    }
}
