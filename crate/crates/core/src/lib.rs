//! Texture descriptors built on the vibration modes of a discrete free plate,
//! together with classical baselines, a linear SVM and a benchmark harness.

pub mod baseline;
pub mod basis_cache;
pub mod bench;
pub mod classifier;
pub mod dataset;
pub mod dmd_features;
pub mod error;
pub mod feature;
pub mod filter_features;
pub mod image_buffer;
pub mod modal_basis;

pub use error::{Error, Result};
pub use feature::{FeatureExtractor, FeatureVector};
pub use image_buffer::ImageBuffer;
