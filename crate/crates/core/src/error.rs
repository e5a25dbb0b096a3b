use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input values: NaN, negative counts, out-of-range rates.
    #[error("validation error: {0}")]
    Validation(String),

    /// Dimension mismatch or a violated precondition between components.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver failure{}: {message}", day.map(|d| format!(" on day {d}")).unwrap_or_default())]
    Solver { day: Option<usize>, message: String },

    #[error("rollout failed at control index {index}: {source}")]
    Rollout {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Strips rollout wrappers to reach the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Rollout { source, .. } => source.root(),
            other => other,
        }
    }
}
