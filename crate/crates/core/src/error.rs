use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for `{operand}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        operand: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("QP solve failed ({status:?}) after {iterations} iterations: {detail}")]
    Solver {
        status: crate::qp::QpStatus,
        iterations: usize,
        detail: String,
    },

    #[error("config error in {location}: {message}")]
    Config { location: String, message: String },

    #[error("trace format error at line {line}: {message}")]
    TraceFormat { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(operand: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            operand,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }
}
