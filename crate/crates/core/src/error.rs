use thiserror::Error;

pub type Result<T> = std::result::Result<T, QgkError>;

#[derive(Debug, Error)]
pub enum QgkError {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported embedding mode: {0}")]
    UnsupportedMode(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("input needs at least two classes")]
    SingleClass,

    #[error("eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("training aborted at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QgkError {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        QgkError::Precondition(msg.into())
    }

    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        QgkError::DimensionMismatch {
            context,
            expected,
            found,
        }
    }
}
