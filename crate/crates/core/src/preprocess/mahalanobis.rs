use nalgebra::DMatrix;

use super::MultiBandImage;
use crate::tensor::SQRT_EPS;
use crate::{contract, Error, Result};

/// Relative ridge added to the covariance diagonal before inversion.
pub const COVARIANCE_RIDGE_SCALE: f64 = 1e-6;
/// Absolute ridge floor so a zero-variance field stays invertible.
const MIN_RIDGE: f64 = 1e-8;

/// Covariance of per-pixel difference vectors and its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceModel {
    covariance: DMatrix<f64>,
    inverse: DMatrix<f64>,
    ridge: f64,
}

impl CovarianceModel {
    /// Sample covariance (denominator `n - 1`) of pixel-interleaved
    /// `vectors`, plus `ridge_scale * trace / b` on the diagonal.
    ///
    /// A zero `ridge_scale` gives the plain sample covariance, which fails
    /// with [`Error::Degenerate`] when singular.
    pub fn estimate(vectors: &[f32], bands: usize, ridge_scale: f64) -> Result<Self> {
        contract!(bands >= 1, "covariance needs at least one band");
        contract!(
            vectors.len() % bands == 0,
            "{} values do not form {bands}-band vectors",
            vectors.len()
        );
        let n = vectors.len() / bands;
        contract!(n >= 2, "covariance needs at least 2 pixels, got {n}");
        let mut mean = vec![0.0f64; bands];
        for px in vectors.chunks(bands) {
            for (m, &v) in mean.iter_mut().zip(px) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = DMatrix::<f64>::zeros(bands, bands);
        let mut centered = vec![0.0f64; bands];
        for px in vectors.chunks(bands) {
            for ((c, &v), m) in centered.iter_mut().zip(px).zip(&mean) {
                *c = v as f64 - m;
            }
            for i in 0..bands {
                for j in i..bands {
                    cov[(i, j)] += centered[i] * centered[j];
                }
            }
        }
        for i in 0..bands {
            for j in i..bands {
                let v = cov[(i, j)] / (n - 1) as f64;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("difference covariance is not finite".into()));
        }
        let ridge = if ridge_scale > 0.0 {
            (ridge_scale * cov.trace() / bands as f64).max(MIN_RIDGE)
        } else {
            0.0
        };
        for i in 0..bands {
            cov[(i, i)] += ridge;
        }
        Self::from_covariance(cov, ridge)
    }

    pub fn from_covariance(covariance: DMatrix<f64>, ridge: f64) -> Result<Self> {
        contract!(covariance.is_square(), "covariance must be square");
        let inverse = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("difference covariance is not positive definite".into()))?
            .inverse();
        Ok(Self {
            covariance,
            inverse,
            ridge,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// `d^T S^-1 d`.
    pub fn quadratic_form(&self, d: &[f32]) -> f64 {
        let b = self.dim();
        let mut q = 0.0;
        for i in 0..b {
            let mut row = 0.0;
            for j in 0..b {
                row += self.inverse[(i, j)] * d[j] as f64;
            }
            q += d[i] as f64 * row;
        }
        q
    }
}

/// Covariance with the default ridge.
pub fn estimate_covariance(vectors: &[f32], bands: usize) -> Result<CovarianceModel> {
    CovarianceModel::estimate(vectors, bands, COVARIANCE_RIDGE_SCALE)
}

/// Per-pixel `I1 - I2`, pixel-interleaved.
pub fn difference_vectors(pre: &MultiBandImage, post: &MultiBandImage) -> Result<Vec<f32>> {
    contract!(
        pre.same_shape(post),
        "difference of {} and {} images",
        pre.describe(),
        post.describe()
    );
    Ok(pre.values().iter().zip(post.values()).map(|(a, b)| a - b).collect())
}

/// Mahalanobis magnitude of the per-pixel spectral difference.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceImage {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
    vectors: Vec<f32>,
}

impl DifferenceImage {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `h x w` magnitudes, row-major.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `h x w x b` difference vectors, pixel-interleaved.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    /// Difference vectors as a `1 x b x h x w` planar buffer.
    pub fn vectors_planar(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.vectors.len());
        for b in 0..self.bands {
            out.extend(self.vectors.iter().skip(b).step_by(self.bands));
        }
        out
    }
}

/// `sqrt((I1 - I2)^T S^-1 (I1 - I2) + eps)` per pixel.
pub fn difference_image(pre: &MultiBandImage, post: &MultiBandImage, cov: &CovarianceModel) -> Result<DifferenceImage> {
    let vectors = difference_vectors(pre, post)?;
    contract!(
        cov.dim() == pre.bands(),
        "covariance is {0} x {0}, images have {1} bands",
        cov.dim(),
        pre.bands()
    );
    let values = vectors
        .chunks(pre.bands())
        .map(|d| (cov.quadratic_form(d) + SQRT_EPS).sqrt() as f32)
        .collect();
    Ok(DifferenceImage {
        height: pre.height(),
        width: pre.width(),
        bands: pre.bands(),
        values,
        vectors,
    })
}
