//! Evaluation toolkit for conversation-driven image regeneration.
//!
//! A sample pairs a ground-truth image with a multi-turn conversation about
//! it. Each prefix of the conversation (a "hop") is summarised into a prompt,
//! rendered by a text-to-image model, and the rendering is compared to the
//! ground truth with pixel, perceptual, semantic and element-level metrics.

pub mod dataset;
pub mod hops;
pub mod imaging;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod scalar;
pub mod synth;

pub use scalar::Scalar;

/// Default-precision luminance plane.
pub type Plane = imaging::ImagePlane<f64>;
pub type PlaneF32 = imaging::ImagePlane<f32>;
pub type ClipEmbedding = metrics::semantic::Embedding<f32>;
