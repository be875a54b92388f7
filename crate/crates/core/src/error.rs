use thiserror::Error;

use crate::model::StateSpaceSpec;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {field}: {reason}")]
    InvalidSpec { field: &'static str, reason: String },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("non-finite value encountered at index {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),

    #[error("invalid corrector: {0}")]
    InvalidCorrector(String),

    #[error("covariance matrix is singular: {0}")]
    SingularCovariance(String),

    #[error("filter output is inconsistent at index {index}: {reason}")]
    InconsistentOutput { index: usize, reason: String },

    #[error("optimizer did not converge after {evaluations} evaluations (best -loglik {objective})")]
    NotConverged {
        best: Box<StateSpaceSpec>,
        objective: f64,
        evaluations: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
