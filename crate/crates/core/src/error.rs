//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// The all-zero LFSR state is absorbing and therefore forbidden.
    #[error("invalid LFSR state: zero is absorbing")]
    ZeroLfsrState,

    /// A configuration is inconsistent (wrong lengths, bad geometry, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An index is out of range for the addressed structure.
    #[error("out of bounds: {0}")]
    Bounds(String),

    /// An operation was applied to an object in the wrong state.
    #[error("invalid state: {0}")]
    State(String),

    /// A numeric argument is outside its documented domain.
    #[error("out of range: {0}")]
    Range(String),

    /// A file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable error-code taxonomy, used by the CLI as process exit code.
    pub fn code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } => 3,
            Error::Bounds(_) => 4,
            Error::State(_) => 5,
            Error::Range(_) | Error::ZeroLfsrState => 6,
            Error::Io(_) => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
