//! Color correction of the pre-change image and the Mahalanobis difference image.

mod image;
mod kernel;
mod mahalanobis;
mod pcc;

pub use image::MultiBandImage;
pub use kernel::{kernel_expand, KernelKind, PolynomialKernel};
pub use mahalanobis::{
    difference_image, difference_vectors, estimate_covariance, CovarianceModel, DifferenceImage,
    COVARIANCE_RIDGE_SCALE,
};
pub use pcc::{apply_pcc, default_beta, downsample_uniform, fit_pcc, ColorMapping};
