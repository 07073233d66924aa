use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the region where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The tail region of interest is polluted by truncation or noise.
    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("overflow: {0}")]
    Overflow(String),

    /// A constructive search found no admissible object.
    #[error("construction failed: {0}")]
    Construction(String),

    /// A series or iterative scheme did not meet its convergence criterion.
    #[error("not converged: {0}")]
    Convergence(String),

    /// The solution left its invariant range during time stepping.
    #[error("integration error at t = {time}: {detail}")]
    Integration { time: f64, detail: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
