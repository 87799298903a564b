use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("SVD did not converge within {sweeps} sweeps")]
    IterationLimit { sweeps: usize },
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("gradient tape is stale or belongs to another network")]
    StaleTape,
    #[error("target mismatch: {0}")]
    TargetMismatch(String),
    #[error("index {index} out of range (valid: {valid})")]
    IndexOutOfRange { index: usize, valid: String },
    #[error("rank {rank} exceeds min(m, n) = {max}")]
    BadRank { rank: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn shape_err(op: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::ShapeMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
