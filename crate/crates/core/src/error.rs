use thiserror::Error;

use crate::Label;

/// Errors raised by the special-function kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("argument outside function domain: {0}")]
    Domain(String),
    #[error("density is singular at x = {x} for shapes a = {a}, b = {b}")]
    Singularity { x: f64, a: f64, b: f64 },
    #[error("continued fraction did not converge after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error("label {0} has fewer than two members")]
    DegenerateClass(Label),
    #[error("need at least two distinct labels, found {0}")]
    InsufficientClasses(usize),
    #[error("no valid (anchor, positive, negative) triplet in batch")]
    EmptyTriplets,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("dataset too large: {0}")]
    Size(String),
    #[error("unknown golden pattern {0:?}")]
    UnknownPattern(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
