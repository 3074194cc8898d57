use nalgebra::DMatrix;

use super::{kernel_expand, MultiBandImage, PolynomialKernel};
use crate::{contract, Error, Result};

/// Relative ridge added to the diagonal of the color-correction Gram matrix.
pub const GRAM_RIDGE_SCALE: f64 = 1e-6;
const REFINEMENT_STEPS: usize = 8;

/// Subsampling factor giving roughly 4096 color samples.
pub fn default_beta(height: usize, width: usize) -> usize {
    (((height * width) as f64 / 4096.0).sqrt().floor() as usize).max(1)
}

/// Pixel spectra on a stride-`beta` grid, row-major, as an `N_c x b` matrix.
pub fn downsample_uniform(img: &MultiBandImage, beta: usize) -> Result<DMatrix<f64>> {
    contract!(beta >= 1, "downsampling factor must be at least 1");
    contract!(
        beta <= img.height().min(img.width()),
        "downsampling factor {beta} exceeds image extent {}",
        img.describe()
    );
    let rows: Vec<usize> = (0..img.height()).step_by(beta).collect();
    let cols: Vec<usize> = (0..img.width()).step_by(beta).collect();
    let mut out = DMatrix::zeros(rows.len() * cols.len(), img.bands());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            for (b, &v) in img.pixel(r, c).iter().enumerate() {
                out[(i * cols.len() + j, b)] = v as f64;
            }
        }
    }
    Ok(out)
}

/// Polynomial mapping from the pre-change color space into the post-change one.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorMapping {
    kernel: PolynomialKernel,
    /// `d x b`: output band `j` is `sum_k rho_k(x) * matrix[(k, j)]`.
    matrix: DMatrix<f64>,
    residual_rms: Option<f64>,
}

impl ColorMapping {
    pub fn from_matrix(kernel: PolynomialKernel, matrix: DMatrix<f64>) -> Result<Self> {
        contract!(
            matrix.nrows() == kernel.expansion_dim(),
            "mapping has {} rows, kernel expands to {}",
            matrix.nrows(),
            kernel.expansion_dim()
        );
        contract!(matrix.iter().all(|v| v.is_finite()), "mapping contains non-finite entries");
        Ok(Self {
            kernel,
            matrix,
            residual_rms: None,
        })
    }

    pub fn kernel(&self) -> &PolynomialKernel {
        &self.kernel
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// RMS fit residual over all samples and bands, when produced by [`fit_pcc`].
    pub fn residual_rms(&self) -> Option<f64> {
        self.residual_rms
    }

    /// Applies the mapping to an `N x b` sample matrix (no clamping).
    pub fn predict(&self, samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(kernel_expand(samples, &self.kernel)? * &self.matrix)
    }
}

/// Ridge-regularized least-squares fit of `i2 ~ rho(i1) M` via the normal equations.
pub fn fit_pcc(i1: &DMatrix<f64>, i2: &DMatrix<f64>, kernel: PolynomialKernel) -> Result<ColorMapping> {
    contract!(
        i1.nrows() == i2.nrows(),
        "sample counts differ: {} vs {}",
        i1.nrows(),
        i2.nrows()
    );
    let features = kernel_expand(i1, &kernel)?;
    let d = kernel.expansion_dim();
    if features.nrows() < d {
        return Err(Error::InsufficientSamples {
            samples: features.nrows(),
            dim: d,
        });
    }
    let gram = features.transpose() * &features;
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("color-correction Gram matrix is not finite".into()));
    }
    let ridge = GRAM_RIDGE_SCALE * gram.trace() / d as f64;
    let mut regularized = gram.clone();
    for k in 0..d {
        regularized[(k, k)] += ridge;
    }
    let rhs = features.transpose() * i2;
    let chol = regularized
        .cholesky()
        .ok_or_else(|| Error::Degenerate("color-correction Gram matrix is not positive definite".into()))?;
    // Iterated ridge: each pass removes the shrinkage bias of the previous one
    // along well-conditioned directions.
    let mut matrix = chol.solve(&rhs);
    for _ in 0..REFINEMENT_STEPS {
        let correction = chol.solve(&(&rhs - &gram * &matrix));
        matrix += correction;
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("color-correction solve produced non-finite values".into()));
    }
    let residual = &features * &matrix - i2;
    let rms = (residual.iter().map(|v| v * v).sum::<f64>() / residual.len().max(1) as f64).sqrt();
    Ok(ColorMapping {
        kernel,
        matrix,
        residual_rms: Some(rms),
    })
}

/// Maps every pixel of the pre-change image; results are clamped to `[0, 1]`.
pub fn apply_pcc(img: &MultiBandImage, mapping: &ColorMapping) -> Result<MultiBandImage> {
    let kernel = mapping.kernel();
    contract!(
        img.bands() == kernel.input_bands,
        "image has {} bands, mapping expects {}",
        img.bands(),
        kernel.input_bands
    );
    let b = img.bands();
    let d = kernel.expansion_dim();
    let m = mapping.matrix();
    let mut x = vec![0.0; b];
    let mut rho = vec![0.0; d];
    let mut values = Vec::with_capacity(img.values().len());
    for px in img.values().chunks(b) {
        for (xi, &v) in x.iter_mut().zip(px) {
            *xi = v as f64;
        }
        kernel.expand_into(&x, &mut rho);
        for j in 0..b {
            let v: f64 = (0..d).map(|k| rho[k] * m[(k, j)]).sum();
            values.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    MultiBandImage::new(img.height(), img.width(), b, values)
}
