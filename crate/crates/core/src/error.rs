use alloc::string::String;

/// Errors reported by the planning core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid primitive {what}: {reason}")]
    InvalidPrimitive { what: String, reason: String },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular system in undamped pseudoinverse")]
    SingularSystem,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
