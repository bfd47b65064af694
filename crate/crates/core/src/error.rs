use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid stage {stage} for a tree of depth {depth}")]
    InvalidStage { stage: usize, depth: usize },
    #[error("invalid depth {0}: must be at least 1")]
    InvalidDepth(usize),
    #[error("object pool is empty")]
    EmptyPool,
    #[error("task sampling failed: {0}")]
    Sampling(String),
    #[error("invalid task tree: {0}")]
    InvalidTree(String),
    #[error("placement failed: {0}")]
    Placement(String),
    #[error("stage {requested} queried out of order (frontier is {frontier:?})")]
    OutOfOrderStage {
        requested: usize,
        frontier: Option<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("episode already finished")]
    EpisodeDone,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss")]
    NonFinite,
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
