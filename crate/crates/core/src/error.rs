use thiserror::Error;

/// Errors produced by the clustering engines and their helpers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("kernel `{0}` needs a batch spanning tree context")]
    MissingTreeContext(&'static str),

    #[error("cluster history is empty")]
    EmptyHistory,

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    EigenNoConvergence { sweeps: usize, residual: f64 },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed input at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
