use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("coefficient index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid probability level {0}; must lie strictly inside (0, 1)")]
    InvalidLevel(f64),

    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDof(f64),

    #[error("stability undefined: marginal has {dof} degrees of freedom (need > 2)")]
    StabilityUndefined { dof: f64 },

    #[error("evaluation set is empty")]
    EmptyEvaluation,

    #[error("unknown pair {factor} -> {outcome}")]
    UnknownPair { factor: String, outcome: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown sweep parameter '{0}'")]
    UnknownParameter(String),

    #[error("day {day} is beyond the analysed span of {span} days")]
    DayOutOfRange { day: u32, span: u32 },

    #[error("ground truth does not match dataset: {0}")]
    TruthMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
