use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty")]
    EmptyInput,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("cannot sample from a zero-norm {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite value {value} at {context}")]
    NonFinite { value: f64, context: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {0} has zero l1 norm")]
    ZeroRow(usize),

    #[error("column {0} of the description is degenerate")]
    DegenerateColumn(usize),

    #[error("rejection sampling exhausted its budget of {budget} proposals")]
    RejectionBudgetExhausted { budget: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
