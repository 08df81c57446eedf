use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("initialization needs at least {needed} seed points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing file or directory: {}", .0.display())]
    Missing(PathBuf),

    #[error("{}:{line}: unsupported camera model `{model}` (expected PINHOLE or SIMPLE_PINHOLE)", path.display())]
    UnsupportedCamera { path: PathBuf, line: usize, model: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
