use thiserror::Error;

use crate::hydraulics::HydraulicError;
use crate::mask::RecommendationError;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Hydraulic(#[from] HydraulicError),

    #[error(transparent)]
    Recommendation(#[from] RecommendationError),

    #[error("historical log, row {row}, column `{column}`: {message}")]
    Log {
        row: usize,
        column: String,
        message: String,
    },

    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}
