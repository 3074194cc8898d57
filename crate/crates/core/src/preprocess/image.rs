use crate::tensor::{Real, Tensor};
use crate::{contract, Result};

/// `height x width x bands` raster with pixel-interleaved values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiBandImage {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
}

impl MultiBandImage {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        contract!(
            height >= 1 && width >= 1 && bands >= 1,
            "image extents must be positive, got {height} x {width} x {bands}"
        );
        contract!(
            values.len() == height * width * bands,
            "{height} x {width} x {bands} image needs {} values, got {}",
            height * width * bands,
            values.len()
        );
        contract!(
            values.iter().all(|v| (0.0..=1.0).contains(v)),
            "image values must lie in [0, 1]"
        );
        Ok(Self {
            height,
            width,
            bands,
            values,
        })
    }

    /// Builds an image from planar (`bands x height x width`) data.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f32>]) -> Result<Self> {
        let bands = planes.len();
        contract!(bands >= 1, "image needs at least one band");
        for p in planes {
            contract!(p.len() == height * width, "band plane has {} values, expected {}", p.len(), height * width);
        }
        let mut values = Vec::with_capacity(height * width * bands);
        for i in 0..height * width {
            values.extend(planes.iter().map(|p| p[i]));
        }
        Self::new(height, width, bands, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Spectrum of the pixel at `(row, col)`.
    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.bands;
        &self.values[start..start + self.bands]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.bands == other.bands
    }

    pub fn describe(&self) -> String {
        format!("{} x {} x {}", self.height, self.width, self.bands)
    }

    pub fn band_plane(&self, band: usize) -> Vec<f32> {
        self.values.iter().skip(band).step_by(self.bands).copied().collect()
    }

    /// `1 x bands x height x width` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let mut data = Vec::with_capacity(self.values.len());
        for b in 0..self.bands {
            data.extend(
                self.values
                    .iter()
                    .skip(b)
                    .step_by(self.bands)
                    .map(|&v| T::from_f64_lossy(v as f64)),
            );
        }
        Tensor::new(vec![1, self.bands, self.height, self.width], data).expect("extents match")
    }
}
