//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, sizing, sampling and training routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed inputs: bad shapes, empty collections, inconsistent lengths.
    #[error("invalid structure: {0}")]
    Structure(String),

    /// Shape mismatch between two otherwise valid values.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A scalar argument outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Index outside the addressable range.
    #[error("index out of range: {0}")]
    Index(String),

    /// The requested partition cannot produce the required nonempty blocks.
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    /// A Bernoulli inclusion probability would exceed 1 for some block.
    #[error("infeasible sampling rate: {0}")]
    InfeasibleRate(String),

    /// A parameter budget too small to satisfy the minimum allocation.
    #[error("infeasible budget: {0}")]
    InfeasibleBudget(String),

    /// Inputs that make the requested computation meaningless (e.g. all-zero spectra).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Numerical failure during iteration (divergence, non-finite values).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Unparseable CSV/JSON input.
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Process exit code used by the command-line interface:
    /// 3 for infeasible configurations, 2 for every other failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::InfeasiblePartition(_)
            | Error::InfeasibleRate(_)
            | Error::InfeasibleBudget(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
