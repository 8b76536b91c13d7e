use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ImagingError>;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {detail}")]
    Header { path: PathBuf, detail: String },
    #[error("{path}: payload holds {actual} bytes, header implies {expected}")]
    PayloadLength {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite pixel value at index {0}")]
    NonFinite(usize),
    #[error("quantization range is degenerate ({lo}..{hi})")]
    DegenerateRange { lo: f64, hi: f64 },
}

impl ImagingError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
