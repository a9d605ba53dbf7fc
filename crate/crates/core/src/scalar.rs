//! Scalar abstraction shared by rasters, embeddings and interpolation.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating sample type used for storage (`f32` or `f64`).
///
/// Storage precision is a caller choice. Every reduction in this crate
/// accumulates in `f64` regardless of `Self`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self;

    #[inline]
    fn as_f64(self) -> f64 {
        // Float::to_f64 is infallible for f32/f64
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
}
