use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: &'static str },

    #[error("checkpoint corrupt: {0}")]
    Corrupt(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("no scorable frames (every frame has zero ground-truth objects)")]
    NoScorableFrames,

    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged {
        epoch: usize,
        step: usize,
        /// Weights from the last step whose loss was finite.
        last_good: Box<crate::embednet::Weights>,
    },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_frame(frame: usize, source: Error) -> Self {
        Error::AtFrame {
            frame,
            source: Box::new(source),
        }
    }

    /// True for errors caused by bad user input (malformed files, invalid
    /// values, missing files) as opposed to failures during computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
            Error::Parse { .. }
            | Error::Json { .. }
            | Error::Image { .. }
            | Error::Validation(_)
            | Error::Corrupt(_)
            | Error::ConfigMismatch(_) => true,
            Error::AtFrame { source, .. } => source.is_input_error(),
            _ => false,
        }
    }
}
