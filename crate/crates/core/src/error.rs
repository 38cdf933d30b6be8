//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid dimension/parameter specification when building an object.
    #[error("configuration: {0}")]
    Config(String),

    /// Incompatible shapes between tensors, maps, datasets or matrices.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An enumeration or materialization guard was exceeded.
    #[error("capacity: {0}")]
    Capacity(String),

    /// Input outside the documented domain of an operation.
    #[error("domain: {0}")]
    Domain(String),

    /// Not enough data for a statistical procedure.
    #[error("input: {0}")]
    Input(String),

    /// Evaluation hit a pole (e.g. log or division at a zero amplitude).
    #[error("singular: {0}")]
    Singular(String),

    /// Numerical abort: divergence guards, rejected steps, failed solves.
    #[error("numerical: {0}")]
    Numerical(String),

    #[error("format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
