use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("mask would remove every face ({removed} of {total})")]
    MaskTooLarge { removed: usize, total: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("zero-length vector has no direction")]
    ZeroVector,
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no exemplars stored for class {0}")]
    NoExemplars(usize),
    #[error("exemplar budget must be positive")]
    BudgetZero,
    #[error("prototype table is empty")]
    EmptyTable,
    #[error("bad increment schedule: {0}")]
    BadSchedule(String),
    #[error("non-finite loss at {stage}: {detail}")]
    NonFiniteLoss { stage: String, detail: String },
    #[error("frozen backbone `{0}` changed during incremental training")]
    FrozenViolation(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("bad shape-family parameters: {0}")]
    BadFamilyParams(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
