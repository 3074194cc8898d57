//! Unsupervised change detection for co-registered bi-temporal multi-band
//! rasters.
//!
//! A randomly initialized residual ConvNet maps the Mahalanobis difference
//! image of a color-corrected image pair to per-pixel change probabilities.
//! Its weights, and those of a VGG-style feature extractor, are optimized
//! for a single image pair against similarity-dissimilarity losses in the
//! image and feature domains, a context-consistency loss over photometric
//! augmentations, and a sparsity penalty.

mod error;

pub mod augment;
pub mod engine;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod networks;
pub mod preprocess;
pub mod synthetic;
pub mod tensor;

pub use error::{Error, Result};
