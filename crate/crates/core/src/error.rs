use thiserror::Error;

use crate::gp::DegeneracyReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance matrix is not positive definite (rank {} of {})", .report.rank, .report.size)]
    CholeskyFailure { report: DegeneracyReport },

    #[error("covariance matrix is not numerically positive definite")]
    NotPositiveDefinite,

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("adaptive quadrature did not converge (estimated error {0:e})")]
    QuadratureNonConvergence(f64),

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("optimization never produced a finite objective value")]
    NoFiniteEvaluation,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
