use alloc::string::String;

/// Errors raised by the library. Messages are meant to be shown to a user.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    Numeric(&'static str),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("operation requires logistic regression, got {0}")]
    UnsupportedArchitecture(&'static str),
    #[error("spectral error: {0}")]
    Spectral(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },
    #[error("privacy budget error: {0}")]
    Budget(String),
    #[error("estimator needs at least n = {min_n} steps, got {n}")]
    Precondition { min_n: u64, n: u64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { expected, found })
    }
}
