use thiserror::Error;

use crate::conic::SolveStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The backend did not reach a trustworthy optimum. Never a membership verdict.
    #[error("inconclusive solve ({context}): status {status:?}")]
    Inconclusive { status: SolveStatus, context: String },

    #[error("dimension guard: d^n = {dim} exceeds the limit {limit}")]
    DimensionGuard { dim: usize, limit: usize },

    /// An inclusion that must hold was violated beyond tolerance; indicates a bug.
    #[error("hierarchy violation: {0}")]
    HierarchyViolation(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn is_inconclusive(&self) -> bool {
        matches!(self, Error::Inconclusive { .. })
    }
}
