use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: &'static str },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("model width {dim} is not divisible by {heads} attention heads")]
    HeadCount { dim: usize, heads: usize },

    #[error("parameter name `{0}` registered twice")]
    DuplicateParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("k-means needs at least {k} points, got {points}")]
    TooFewPoints { points: usize, k: usize },

    #[error("infeasible generator config: {0}")]
    InfeasibleConfig(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad magic bytes in {path}")]
    BadMagic { path: PathBuf },

    #[error("unsupported format version {found} in {path} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("truncated record in {path}")]
    Truncated { path: PathBuf },

    #[error("malformed record in {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("checkpoint does not match config: {0}")]
    CheckpointMismatch(String),

    #[error("corpus at {0} contains no usable episodes")]
    EmptyCorpus(PathBuf),

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },

    #[error("frame {frame} out of range for episode with {frames} frames")]
    FrameOutOfRange { frame: usize, frames: usize },

    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Adapter for `map_err` that attaches `path` to an I/O error.
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
