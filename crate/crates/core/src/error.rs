use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input: coordinate {index} is {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("exponential overflow: exponent {exponent} exceeds the f64 range")]
    Overflow { exponent: f64 },

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("field is unbounded: {0}")]
    Unbounded(String),

    #[error("infeasible at this resolution: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Infeasible { residual: f64, tolerance: f64 },

    #[error("trajectory exploded at t = {time}")]
    Exploded { time: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
