use thiserror::Error;

use crate::domain::Dimensionality;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimensionality mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: Dimensionality,
        found: Dimensionality,
    },

    #[error("gradient of a cusped density is undefined at the origin")]
    DegenerateAtOrigin,

    #[error("conditional density undefined: rho(r) = {density:e} is below threshold")]
    UndefinedConditional { density: f64 },

    #[error("configuration must hold {expected} satellites, found {found}")]
    SatelliteCount { expected: usize, found: usize },

    #[error("{operation} is not supported for {what}")]
    Unsupported {
        operation: &'static str,
        what: String,
    },

    #[error("normalization estimate is degenerate: every sample had zero weight")]
    DegenerateNormalization,

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("all objective evaluations failed: {0}")]
    OptimizationFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    /// Numerical failures map to exit code 2, everything else that is
    /// caller-supplied to exit code 1.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateAtOrigin
                | Error::DegenerateNormalization
                | Error::NonFinite { .. }
                | Error::OptimizationFailed(_)
                | Error::UndefinedConditional { .. }
        )
    }
}
