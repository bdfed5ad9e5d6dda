//! Comparison extractors: co-occurrence statistics, local binary patterns
//! and oriented-gradient histograms.

pub mod glcm;
pub mod hog;
pub mod lbp;

pub use glcm::{compute_glcm, haralick_features, Glcm, GlcmParams, Haralick, HaralickFeatures};
pub use hog::{hog_features, Hog, HogDescriptor};
pub use lbp::{lbp_features, Lbp, LbpHistogram};
