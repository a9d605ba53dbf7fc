//! Image and element metrics.

pub mod brisque;
pub mod computational;
pub mod element;
pub mod semantic;

use thiserror::Error;

/// Errors shared by the full-reference pixel metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch { left: (usize, usize), right: (usize, usize) },
    #[error("dynamic range mismatch: {0} vs {1}")]
    RangeMismatch(f64, f64),
    #[error("{width}x{height} plane is too small for a {window}x{window} window")]
    TooSmallForWindow { window: usize, width: usize, height: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
