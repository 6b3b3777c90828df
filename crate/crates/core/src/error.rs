use thiserror::Error;

/// Errors raised anywhere in the simulation and model stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("register width {width} outside supported range 1..={max}")]
    Capacity { width: usize, max: usize },

    #[error("qubit {qubit} out of range for width {width}")]
    Index { qubit: usize, width: usize },

    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("outcome qubit {qubit}={value} has probability {probability:e}")]
    ImpossibleOutcome {
        qubit: usize,
        value: u8,
        probability: f64,
    },

    #[error("state norm drifted to {norm} (tolerance 1e-10)")]
    NormDrift { norm: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("state preparation failed: post-selection probability {probability:e}")]
    PreparationFailure { probability: f64 },

    #[error("degenerate output distribution: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
