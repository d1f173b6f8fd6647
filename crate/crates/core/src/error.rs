use std::path::PathBuf;

/// Errors produced by the learning engine and its data sources.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty problem: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("zero variance in sidelobe region")]
    ZeroVariance,

    #[error("frame index {new} does not follow stored index {last}")]
    FrameOrder { last: usize, new: usize },

    #[error("problem size {size} exceeds the dense solver bound {bound}")]
    SizeBound { size: usize, bound: usize },

    #[error("region does not intersect the frame")]
    EmptyIntersection,

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {frames} frames but {rects} ground-truth rectangles")]
    CountMismatch {
        path: PathBuf,
        frames: usize,
        rects: usize,
    },

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

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
