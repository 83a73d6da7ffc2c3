use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("observation is impossible under both models")]
    ImpossibleObservation,

    #[error("every user in the population has zero counts")]
    AllUsersEmpty,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit did not converge after {iterations} iterations (relative change {change:e})")]
    NotConverged { iterations: usize, change: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema mismatch: {rejected} of {total} rows rejected")]
    SchemaMismatch { rejected: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for data problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } | Error::Domain(_) | Error::ImpossibleObservation => 3,
            _ => 2,
        }
    }
}

pub(crate) fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
