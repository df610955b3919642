use std::path::PathBuf;

use cmi_tensor::TensorError;
use thiserror::Error;

use crate::inception::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid architecture: {}", join(.0))]
    Config(Vec<Violation>),
    #[error("activation assignment: {0}")]
    Assignment(String),
    #[error("{0}")]
    Invalid(String),
    #[error("manifest row {row} ({path}): {reason}")]
    ManifestRow {
        row: usize,
        path: String,
        reason: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
