use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller broke an operation's precondition (stale clique schedule, wrong matrix size, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
