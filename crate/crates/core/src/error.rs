use thiserror::Error;

use crate::engine::IterationBatch;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vector")]
    EmptyInput,

    #[error("not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate summary")]
    DegenerateSummary,

    #[error("cannot remove last component")]
    CannotRemoveLast,

    /// Every particle of the batch carried a zero likelihood estimate.
    #[error("zero total weight")]
    ZeroTotalWeight(Box<IterationBatch>),

    #[error("no informative proposal draws")]
    NoInformativeProposal,

    #[error("grid too narrow: captured mass {mass}")]
    GridTooNarrow { mass: f64 },

    #[error("invalid likelihood estimate at particle {index}: log value {value}")]
    InvalidEstimate { index: usize, value: f64 },

    #[error("no acceptances after {proposals} proposals (rate 0)")]
    NoAcceptances { proposals: usize },

    #[error("data format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
