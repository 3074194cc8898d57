//! The change-probability generator, the multi-scale feature extractor, and
//! their parameter storage.

mod archive;
mod dcpg;
mod dfe;

pub use archive::{ArchiveEntry, WeightArchive};
pub use dcpg::{DcpgConfig, DcpgNetwork};
pub use dfe::{load_weights, DfeConfig, DfeNetwork};

use sha2::{Digest, Sha256};

use crate::augment::SeededRng;
use crate::preprocess::MultiBandImage;
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{contract, Result};

/// Ordered, named parameter tensors of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Real = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamSet<T> {
    pub(crate) fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, name: String, tensor: Tensor<T>) {
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.tensors[i])
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Places every parameter on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect()
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.names.iter().zip(&self.tensors) {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for v in t.data() {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Weight `out x in x k x k` drawn from `U(-bound, bound)` with
/// `bound = scale * sqrt(6 / fan_in)`, and a zero bias.
pub(crate) fn push_conv<T: Real>(
    params: &mut ParamSet<T>,
    rng: &mut SeededRng,
    name: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    scale: f64,
) {
    let fan_in = in_channels * kernel * kernel;
    let bound = scale * (6.0 / fan_in as f64).sqrt();
    let numel = out_channels * fan_in;
    let data = (0..numel)
        .map(|_| T::from_f64_lossy(rng.uniform(-bound, bound)))
        .collect();
    let weight = Tensor::new(vec![out_channels, in_channels, kernel, kernel], data).expect("extents match");
    params.push(format!("{name}.weight"), weight);
    params.push(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
}

/// Extracts three bands, in the given order, as a 3-channel image.
pub fn band_select(img: &MultiBandImage, mapping: [usize; 3]) -> Result<MultiBandImage> {
    for &b in &mapping {
        contract!(
            b < img.bands(),
            "band index {b} out of range for {}-band image",
            img.bands()
        );
    }
    let values = img
        .values()
        .chunks(img.bands())
        .flat_map(|px| mapping.map(|b| px[b]))
        .collect();
    MultiBandImage::new(img.height(), img.width(), 3, values)
}
