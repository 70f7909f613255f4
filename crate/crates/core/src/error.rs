use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine, the models, or the pipelines that drive them.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A layer or pipeline was configured with values that cannot work.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an API contract (e.g. backward on a non-scalar).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset content or layout problems.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite loss or diverged.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A training step that needs a previous step's weights was started without them.
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}
macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::Error::Config(format!($($arg)*)) };
}
pub(crate) use config_err;
pub(crate) use shape_err;
