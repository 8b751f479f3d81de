use thiserror::Error;

/// Errors raised by problems, the least-squares kernels and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AapError {
    #[error("non-finite value at index {index}")]
    NumericalBreakdown { index: usize },

    #[error("unknown field `{name}` (valid fields: {})", valid.join(", "))]
    UnknownField { name: String, valid: Vec<String> },

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("rank-deficient triangular factor (|r_{index}{index}| = {value:e}, max |r_ii| = {max:e})")]
    RankDeficient { index: usize, value: f64, max: f64 },

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("invalid field layout: {0}")]
    InvalidLayout(String),
}

pub type Result<T, E = AapError> = std::result::Result<T, E>;
