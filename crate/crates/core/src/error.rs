use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { path: PathBuf, expected: u32, found: u32 },
    #[error("{path} is truncated: needed {needed} bytes, got {got}")]
    TruncatedFile { path: PathBuf, needed: usize, got: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("unexpected image dimensions {rows}x{cols}")]
    BadDimensions { rows: usize, cols: usize },
    #[error("not enough samples: requested {requested}, available {available}")]
    InsufficientSamples { requested: usize, available: usize },
    #[error("profile has no nonzero entry")]
    ZeroProfile,
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("reference acquisition recorded zero counts")]
    ZeroReference,
    #[error("camera frame recorded no photons")]
    AcquisitionEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot parse checkpoint: {0}")]
    CheckpointParse(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
