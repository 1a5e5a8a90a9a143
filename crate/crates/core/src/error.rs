use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: String, found: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("stale cache: forward pass ran against parameter version {cache}, network is at {net}")]
    StaleCache { cache: u64, net: u64 },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("episode already finished")]
    EpisodeOver,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
