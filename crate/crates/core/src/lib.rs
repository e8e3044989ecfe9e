//! QR symbols under noise: a byte-mode encoder and deterministic decoder,
//! Reed-Solomon over GF(256), document degradation models, a labelled
//! dataset generator, a small residual CNN and the benchmark harness that
//! pits the two readers against each other.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the usual choices.

pub mod bench;
pub mod cnn;
pub mod datagen;
pub mod degrade;
pub mod gf;
pub mod qr;
pub mod raster;
pub mod rs;
pub mod scalar;

/// Grayscale image in [0, 1], 0 = dark.
pub type GrayImage = raster::Image<f64>;
pub type GrayImageF32 = raster::Image<f32>;
/// The classifier as trained and checkpointed.
pub type Model = cnn::Model<f32>;
/// Double-precision classifier for gradient checks.
pub type Model64 = cnn::Model<f64>;
pub type Tensor = cnn::Tensor<f32>;
pub type Tensor64 = cnn::Tensor<f64>;
pub type DisplacementField = raster::DisplacementField<f64>;
