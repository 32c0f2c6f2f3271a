//! Error type shared by every module in the crate.

use alloc::string::String;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// All the ways an operation in this crate can fail.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes do not conform (inner dimensions, row counts, ...).
    Dimension(String),
    /// A sequence-level operation received zero positions.
    EmptySequence,
    /// A token id is outside the model vocabulary.
    Vocabulary { token: usize, vocab_size: usize },
    /// A configuration or argument value is outside its documented domain.
    Parameter(String),
    /// A computation produced or received a non-finite value.
    Numeric(String),
    /// Mathematically degenerate input (e.g. zero-norm vector).
    DegenerateInput(String),
    /// All decay rates are non-positive, so the context horizon is unbounded.
    DegenerateDecay { min_decay: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension error: {msg}"),
            Error::EmptySequence => write!(f, "empty sequence: at least one position is required"),
            Error::Vocabulary { token, vocab_size } => {
                write!(f, "vocabulary error: token {token} out of range for vocab size {vocab_size}")
            }
            Error::Parameter(msg) => write!(f, "parameter error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::DegenerateInput(msg) => write!(f, "degenerate input: {msg}"),
            Error::DegenerateDecay { min_decay } => {
                write!(f, "degenerate decay: min(w) = {min_decay} <= 0 gives an unbounded context")
            }
        }
    }
}

impl core::error::Error for Error {}
