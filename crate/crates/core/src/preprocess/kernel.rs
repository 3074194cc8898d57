use nalgebra::DMatrix;

use crate::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Identity,
    /// Linear terms, then `x_i x_j` for `i <= j` (row-major over `i`), then 1.
    Poly2,
    /// Linear terms, then `sqrt(x_i x_j)` for `i < j` (row-major over `i`).
    Root2,
}

impl KernelKind {
    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Identity => "identity",
            KernelKind::Poly2 => "poly2",
            KernelKind::Root2 => "root2",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(KernelKind::Identity),
            "poly2" => Ok(KernelKind::Poly2),
            "root2" => Ok(KernelKind::Root2),
            other => Err(Error::Config(format!(
                "unknown color-correction kernel '{other}' (expected identity, poly2 or root2)"
            ))),
        }
    }
}

/// Maps a `b`-band spectrum into the `d`-dimensional regression space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolynomialKernel {
    pub kind: KernelKind,
    pub input_bands: usize,
}

impl PolynomialKernel {
    pub fn new(kind: KernelKind, input_bands: usize) -> Self {
        Self { kind, input_bands }
    }

    pub fn expansion_dim(&self) -> usize {
        let b = self.input_bands;
        match self.kind {
            KernelKind::Identity => b,
            KernelKind::Poly2 => b + b * (b + 1) / 2 + 1,
            KernelKind::Root2 => b + b * (b - 1) / 2,
        }
    }

    /// Expands one spectrum into `out` (length `expansion_dim`).
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        let b = self.input_bands;
        out[..b].copy_from_slice(&x[..b]);
        let mut k = b;
        match self.kind {
            KernelKind::Identity => {}
            KernelKind::Poly2 => {
                for i in 0..b {
                    for j in i..b {
                        out[k] = x[i] * x[j];
                        k += 1;
                    }
                }
                out[k] = 1.0;
            }
            KernelKind::Root2 => {
                for i in 0..b {
                    for j in i + 1..b {
                        out[k] = (x[i] * x[j]).max(0.0).sqrt();
                        k += 1;
                    }
                }
            }
        }
    }
}

/// Row-wise kernel expansion of an `N x b` sample matrix.
pub fn kernel_expand(samples: &DMatrix<f64>, kernel: &PolynomialKernel) -> Result<DMatrix<f64>> {
    contract!(
        samples.ncols() == kernel.input_bands,
        "kernel expects {} bands, samples have {}",
        kernel.input_bands,
        samples.ncols()
    );
    let d = kernel.expansion_dim();
    let mut out = DMatrix::zeros(samples.nrows(), d);
    let mut row = vec![0.0; kernel.input_bands];
    let mut expanded = vec![0.0; d];
    for r in 0..samples.nrows() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = samples[(r, c)];
        }
        kernel.expand_into(&row, &mut expanded);
        for (c, &v) in expanded.iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}
