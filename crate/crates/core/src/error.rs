use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A law, geometry or solver parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    /// An iterative linear solve hit its iteration cap.
    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    /// The eigensolver hit its iteration cap; carries the achieved residuals.
    #[error("eigensolver did not converge after {iterations} iterations")]
    EigenNonConvergence { iterations: usize, residuals: Vec<f64> },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// `true` for failures of an iterative method, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::EigenNonConvergence { .. } | Error::NotPositiveDefinite
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;
