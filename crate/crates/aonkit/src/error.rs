//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the numeric core, layers and file formats.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AonError {
    /// Operand dimensions are incompatible.
    #[error("{op}: dimension mismatch, expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    /// An input contained NaN or infinite entries.
    #[error("{0}: non-finite entries")]
    NonFinite(&'static str),
    /// Spectral-norm estimate collapsed to zero (all-zero weight).
    #[error("degenerate weight matrix: spectral norm estimate is zero")]
    DegenerateWeight,
    /// Training forward requested on a frozen parameter.
    #[error("parameter is frozen; use the inference forward")]
    FrozenParam,
    /// Class label outside the configured range.
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    /// Batch statistics need at least two samples.
    #[error("batch normalization requires batch size >= 2 in training mode, got {0}")]
    BatchTooSmall(usize),
    /// Invalid training configuration.
    #[error("config: {0}")]
    Config(String),
    /// IDX container had an unexpected magic number.
    #[error("{path}: bad IDX magic {got:#010x}, expected {expected:#010x}")]
    IdxMagic {
        path: String,
        got: u32,
        expected: u32,
    },
    /// File shorter than its header promises.
    #[error("{path}: truncated, expected {expected} bytes, got {got}")]
    Truncated {
        path: String,
        expected: usize,
        got: usize,
    },
    /// Malformed checkpoint container.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    /// Underlying I/O failure (message only, to keep the error cloneable).
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for AonError {
    fn from(e: std::io::Error) -> Self {
        AonError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AonError>;
