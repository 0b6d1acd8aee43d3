//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The API was called in an unsupported way (stale tape, empty buffer, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric argument would overflow or underflow the computation.
    #[error("range error: {0}")]
    Range(String),

    /// Training data turned non-finite before a loss could be formed.
    #[error("training health: {0}")]
    TrainingHealth(String),

    /// A training run produced a non-finite loss and was aborted.
    #[error("training diverged at env step {step}: {detail}")]
    Diverged { step: u64, detail: String },

    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    /// Bad configuration value; the message names the offending field.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
