//! Uncertainty-aware lung nodule segmentation from multiple annotations.
pub mod dataio;
pub mod error;
pub mod evalharness;
pub mod losses;
pub mod maskops;
pub mod metrics;
pub mod model;
pub mod runconfig;
pub mod trainer;

pub use error::{Error, Result};
