use thiserror::Error;

/// Errors raised by the block-coordinate toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid block structure: {0}")]
    InvalidStructure(String),

    #[error("non-finite value in block {block}: {what}")]
    NonFinite { block: usize, what: &'static str },

    #[error("non-finite forward-backward envelope at iteration {iteration}")]
    NonFiniteEnvelope { iteration: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid stepsize for block {block}: gamma = {gamma}, must lie in (0, {bound})")]
    InvalidStepsize { block: usize, gamma: f64, bound: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("aggregate drift: stored {stored:e} vs recomputed {recomputed:e} (difference {diff:e})")]
    AggregateDrift { stored: f64, recomputed: f64, diff: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
