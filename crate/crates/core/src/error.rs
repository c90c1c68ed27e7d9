use thiserror::Error;

/// Errors raised by the estimators, generators and metrics.
#[derive(Debug, Error)]
pub enum CcnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch { context: &'static str, expected: usize, actual: usize },

    #[error("backward called without a recorded forward pass")]
    NoForwardPass,

    #[error("training diverged: non-finite {what} at step {step}")]
    Diverged { what: &'static str, step: usize },

    #[error("treatment arm {arm} is empty; positivity requires both arms to be observed")]
    EmptyArm { arm: u8 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("AUC undefined: decision labels contain a single class")]
    AucUndefined,

    #[error("personalized utility needs per-individual parameters for row {0}")]
    MissingIndividual(usize),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CcnError>;
