use thiserror::Error;

/// Errors raised while validating inputs or building and solving models.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("cell index {index} outside road of {num_cells} cells")]
    CellOutOfRange { index: usize, num_cells: usize },

    #[error("SNR thresholds must be strictly increasing and positive (violation at position {position})")]
    NonMonotoneThresholds { position: usize },

    #[error("quadrature failed to converge: estimate {estimate}, error bound {error_bound}")]
    QuadratureDivergence { estimate: f64, error_bound: f64 },

    #[error("observation {observation} has zero probability under action {action} and the current belief")]
    ImpossibleObservation { action: usize, observation: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch { what: String, expected: usize, actual: usize },

    #[error("artifact error: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
