use thiserror::Error;

/// Errors raised by tensor construction and graph operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("{op}: {reason}")]
    Structural { op: &'static str, reason: String },
    #[error("{op}: non-positive output extent ({detail})")]
    NonPositiveExtent { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
}

impl TensorError {
    pub(crate) fn structural(op: &'static str, reason: impl Into<String>) -> Self {
        TensorError::Structural {
            op,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
