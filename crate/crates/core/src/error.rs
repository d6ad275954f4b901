use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoise(f64),

    #[error("MSE weight must be positive, got {0}")]
    NonPositiveWeight(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix I + Z0*Y is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("target beamformer set is all-zero")]
    ZeroTarget,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{failed} of {total} trials failed, aborting experiment")]
    TooManyFailures { failed: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
