use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid rig: {0}")]
    InvalidRig(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point behind camera (z = {z:.3e})")]
    BehindCamera { z: f64 },

    #[error("invalid detections: {0}")]
    InvalidDetections(String),

    #[error("missing detection frames, gap at frame {0}")]
    FrameGap(usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("residual block '{block}' produced non-finite values")]
    NonFinite { block: String },

    #[error("{stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input (files, schemas, config)
    /// rather than a runtime failure. The CLI maps this to exit code 1
    /// versus 2.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidRig(_)
                | Error::InvalidMesh(_)
                | Error::InvalidCamera(_)
                | Error::InvalidDetections(_)
                | Error::FrameGap(_)
                | Error::InvalidConfig(_)
                | Error::InvalidInput(_)
                | Error::Io { .. }
                | Error::Parse { .. }
        )
    }
}
