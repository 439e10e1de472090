/// Errors raised anywhere in the inference engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("simulator produced a non-finite value in row {row}")]
    SimulatorFault { row: usize },

    #[error("grid posterior has no finite log-density cell")]
    EmptyPosterior,

    #[error("container has bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("container payload is truncated: need {needed} bytes, have {available}")]
    TruncatedPayload { needed: usize, available: usize },

    #[error("container tensor extents are inconsistent: {0}")]
    OffsetMismatch(String),

    #[error("container manifest is invalid: {0}")]
    Manifest(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDivergence { epoch: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("embedding container {path} for task {task} not found; generate it with `{command}`")]
    MissingEmbeddings { path: String, task: String, command: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
