use alloc::string::String;

/// Errors produced by the decomposition library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// An iterative kernel stopped before reaching its tolerance.
    #[error("numeric failure after {iterations} iterations: {reason}")]
    NumericFailure {
        iterations: usize,
        reason: &'static str,
    },
    #[error("internal consistency violated: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidInput(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
