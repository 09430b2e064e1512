//! Error types shared across the engine.

use crate::numerics::Rat;

/// Errors produced by the engine and the search oracles.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A buy would remove the pool's entire reserve of the asset.
    #[error("trade would drain the pool: dx={} with reserve x={}", .0.0, .0.1)]
    PoolDrain(Box<(Rat, Rat)>),

    /// An internal consistency check failed. This always indicates a bug.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// A scenario or request failed validation; `field` names the offender.
    #[error("invalid {field}: {msg}")]
    Validation { field: String, msg: String },

    /// Subset enumeration would exceed the hard limit; the caller must
    /// shrink the fill set instead of silently sampling.
    #[error("refusing subset enumeration over {fills} fills (limit {limit})")]
    SubsetLimit { fills: usize, limit: usize },
}

impl Error {
    pub fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
