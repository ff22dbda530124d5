//! Core library for the cube-house segmentation benchmark: synthetic scene
//! generation, data preparation, the three segmentation models, metrics and
//! the training harness.

pub mod datapipe;
pub mod label;
pub mod metrics;
pub mod models;
pub mod scenegen;
pub mod trainer;
pub mod viz;

/// Class-index mask, (H, W), values in `0..num_classes`.
pub type Mask = ndarray::Array2<u8>;

/// 8-bit RGB image, (H, W, 3).
pub type RgbImage = ndarray::Array3<u8>;
