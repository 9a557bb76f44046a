use thiserror::Error;

/// Errors surfaced by the library. The CLI maps each variant onto a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("series `{0}` contains no observed values")]
    AllMissing(String),

    #[error("series too short: need at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("non-finite loss at step {step}; last good checkpoint: {last_good}")]
    NonFiniteLoss { step: usize, last_good: String },

    #[error("covariance factorization failed after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("insufficient windows for split: {0}")]
    InsufficientSplit(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 2,
            Error::NonFiniteActivation { .. }
            | Error::NonFiniteLoss { .. }
            | Error::Factorization { .. } => 4,
            _ => 3,
        }
    }
}
