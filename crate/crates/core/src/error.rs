use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated or malformed file: {0}")]
    Malformed(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("number of scales j0={j0} out of range [{min}, {max}]")]
    ScalesOutOfRange { j0: usize, min: usize, max: usize },
    #[error("scale index {j} out of range (j0={j0})")]
    ScaleOutOfRange { j: usize, j0: usize },
    #[error("shearing index {k} out of range for scale {j} ({count} shearings)")]
    ShearingOutOfRange { j: usize, k: usize, count: usize },
    #[error("imaginary residue {ratio:e} exceeds tolerance in band (j={j}, k={k})")]
    ImaginaryResidue { j: usize, k: usize, ratio: f64 },
    #[error("invalid homography: {0}")]
    InvalidHomography(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("keypoint at ({x:.2}, {y:.2}) is closer than {margin:.2} px to the border")]
    TooCloseToBorder { x: f64, y: f64, margin: f64 },
    #[error("descriptor support is flat")]
    FlatPatch,
    #[error("descriptor dimension mismatch: {0} vs {1}")]
    DescriptorDimension(usize, usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("image encoding error: {0}")]
    Codec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
