//! Underwater image restoration by transmission estimation.
//!
//! A small convolutional network predicts a per-pixel transmission map from
//! a degraded image; the scene radiance is recovered by inverting the
//! formation model `I = J·t + B·(1 − t)`. Training runs in two phases:
//! supervised regression against synthetic transmission maps, then
//! label-free refinement that maximizes a weighted sum of image-quality
//! gains of the restored image.

pub mod error;
pub mod imgcore;
pub mod metrics;
pub mod network;
pub mod physics;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use imgcore::{GrayImage, Image, LabImage, Plane};
pub use metrics::{IqmWeights, QualityReport, UciqeCoefficients};
pub use network::{ModelParams, Tensor};
pub use physics::{AttenuationCoefficients, BackgroundLight, TransmissionMap};
