use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlrError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("raster data length {len} does not match {width}x{height}")]
    BadRasterLength {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("region mask is empty")]
    EmptyMask,
    #[error("empty input list: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("photo has no separated layers or matte")]
    MissingLayers,
    #[error("no candidate patches in search range")]
    NoCandidates,
    #[error("manifest {section} entry {index}: {message}")]
    Manifest {
        section: &'static str,
        index: usize,
        message: String,
    },
    #[error("bundle version {found:?} is not supported (expected {expected:?})")]
    BundleVersion { found: String, expected: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BlrError>;

impl BlrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BlrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        BlrError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
