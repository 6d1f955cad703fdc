use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("empty text")]
    EmptyText,

    #[error("empty positive set")]
    EmptyPositives,

    #[error("character index {index} out of range for charset of size {size}")]
    BadIndex { index: usize, size: usize },

    #[error(
        "no negative candidate of `{image}` has hardness above {threshold}; \
         regenerate the dataset with more similar names or lower the threshold"
    )]
    HardPoolExhausted { image: String, threshold: f32 },

    #[error("label must be 0 or 1, got {0}")]
    BadLabel(f32),

    #[error("{0}")]
    Image(String),

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("checkpoint: bad magic {0:?}, expected \"GAV1\" (unsupported version)")]
    CheckpointVersion([u8; 4]),

    #[error("checkpoint: corrupt {section}: {msg}")]
    CheckpointCorrupt { section: String, msg: String },

    #[error("charset mismatch between checkpoint and dataset: {0}")]
    CharsetMismatch(String),

    #[error("step {step}: loss is not finite ({loss})")]
    NanLoss { step: usize, loss: f32 },

    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]]) -> Self {
        Error::Shape { op, shapes: shapes.iter().map(|s| s.to_vec()).collect() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
