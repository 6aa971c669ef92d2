//! Error type shared across the pricing library.

use thiserror::Error;

/// Errors produced by model validation, kernel construction, and pricing runs.
#[derive(Debug, Error)]
pub enum PricingError {
    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numerical step failed (non-finite values, truncation cap hit, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// File or stream I/O failed.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, PricingError>;
