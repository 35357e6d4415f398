//! Crate-wide error type.

use std::path::PathBuf;

/// Error type shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not conform to an operation's algebraic rule.
    #[error("{op}: shape mismatch, lhs {lhs:?} vs rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A committed value contains NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// An argument violates a documented precondition.
    #[error("{0}")]
    Invalid(String),

    /// Experiment-config parse or validation failure.
    #[error("config: {0}")]
    Config(String),

    /// Malformed data or checkpoint file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
