use super::{push_conv, ParamSet, WeightArchive};
use crate::augment::SeededRng;
use crate::preprocess::MultiBandImage;
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{contract, Error, Result};

const VGG16_CONVS: [usize; 5] = [2, 2, 3, 3, 3];
const VGG16_CHANNELS: [usize; 5] = [64, 128, 256, 512, 512];
const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfeConfig {
    /// Number of 3x3 conv+relu layers in each stage.
    pub stage_convs: Vec<usize>,
    /// Output channels of each stage.
    pub stage_channels: Vec<usize>,
    pub trainable: bool,
    /// Standardize inputs with the ImageNet channel statistics.
    pub normalize_input: bool,
    pub seed: u64,
}

impl Default for DfeConfig {
    fn default() -> Self {
        Self::vgg16(2).expect("two stages")
    }
}

impl DfeConfig {
    /// The first `stages` stages of VGG-16.
    pub fn vgg16(stages: usize) -> Result<Self> {
        contract!(
            (1..=VGG16_CONVS.len()).contains(&stages),
            "feature extractor supports 1 to {} stages, got {stages}",
            VGG16_CONVS.len()
        );
        Ok(Self {
            stage_convs: VGG16_CONVS[..stages].to_vec(),
            stage_channels: VGG16_CHANNELS[..stages].to_vec(),
            trainable: true,
            normalize_input: true,
            seed: 0,
        })
    }

    pub fn stages(&self) -> usize {
        self.stage_convs.len()
    }

    pub fn validate(&self) -> Result<()> {
        contract!(!self.stage_convs.is_empty(), "feature extractor needs at least one stage");
        contract!(
            self.stage_convs.len() == self.stage_channels.len(),
            "stage plan has {} conv counts but {} channel counts",
            self.stage_convs.len(),
            self.stage_channels.len()
        );
        contract!(
            self.stage_convs.iter().chain(&self.stage_channels).all(|&n| n >= 1),
            "stage conv and channel counts must be positive"
        );
        Ok(())
    }
}

/// VGG-style feature extractor: each stage is a run of 3x3 conv+relu layers
/// followed by 2x2 max pooling, and the pooled output of every stage is a tap.
#[derive(Clone, Debug, PartialEq)]
pub struct DfeNetwork<T: Real = f32> {
    config: DfeConfig,
    params: ParamSet<T>,
}

impl<T: Real> DfeNetwork<T> {
    pub fn new(config: DfeConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed);
        let mut params = ParamSet::new();
        let mut in_channels = 3;
        for (l, (&convs, &channels)) in config.stage_convs.iter().zip(&config.stage_channels).enumerate() {
            for j in 0..convs {
                push_conv(&mut params, &mut rng, &format!("stage{}.conv{}", l + 1, j + 1), in_channels, channels, 3, 1.0);
                in_channels = channels;
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DfeConfig {
        &self.config
    }

    pub fn trainable(&self) -> bool {
        self.config.trainable
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Binds the parameters; they track gradients only when trainable.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.bind(tape, self.config.trainable)
    }

    /// Channel counts of the taps.
    pub fn tap_channels(&self) -> &[usize] {
        &self.config.stage_channels
    }

    /// `1 x 3 x h x w` tensor of a 3-band image, standardized when configured.
    pub fn input_tensor(&self, img: &MultiBandImage) -> Result<Tensor<T>> {
        contract!(
            img.bands() == 3,
            "feature extractor expects a 3-band image, got {} bands",
            img.bands()
        );
        let mut t = img.to_tensor::<T>();
        if self.config.normalize_input {
            let plane = img.pixels();
            for (c, chunk) in t.data_mut().chunks_mut(plane).enumerate() {
                let (m, s) = (IMAGENET_MEAN[c], IMAGENET_STD[c]);
                for v in chunk {
                    *v = T::from_f64_lossy((v.as_f64() - m) / s);
                }
            }
        }
        Ok(t)
    }

    /// Feature taps `F^1 .. F^L` of a `1 x 3 x h x w` input.
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], input: Var) -> Result<Vec<Var>> {
        contract!(
            vars.len() == self.params.len(),
            "feature extractor expects {} bound parameters, got {}",
            self.params.len(),
            vars.len()
        );
        let (_, c, h, w) = tape.value(input).dims4()?;
        contract!(c == 3, "feature extractor expects 3 input channels, got {c}");
        let stages = self.config.stages();
        contract!(
            h >> stages >= 1 && w >> stages >= 1,
            "{h} x {w} input is too small for {stages} pooling stages"
        );
        let mut x = input;
        let mut taps = Vec::with_capacity(stages);
        let mut k = 0;
        for &convs in &self.config.stage_convs {
            for _ in 0..convs {
                x = tape.conv2d(x, vars[k], vars[k + 1], 1, 1)?;
                x = tape.relu(x)?;
                k += 2;
            }
            x = tape.max_pool2(x)?;
            taps.push(x);
        }
        Ok(taps)
    }

    /// Taps evaluated without gradient tracking.
    pub fn features(&self, input: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut tape = Tape::new();
        let vars = self.params.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let taps = self.forward(&mut tape, &vars, x)?;
        Ok(taps.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Overwrites parameters from `archive`. Under `strict`, every catalog
    /// entry must be present with the right shape and no extra arrays may
    /// exist; otherwise absent or mismatched entries keep their random init.
    pub fn load_weights(&mut self, archive: &WeightArchive, strict: bool) -> Result<()> {
        if strict {
            for e in archive.entries() {
                if self.params.get(&e.name).is_none() {
                    return Err(Error::Archive(format!("unexpected array {:?} not in the catalog", e.name)));
                }
            }
        }
        let mut updates = Vec::new();
        for (i, name) in self.params.names().iter().enumerate() {
            let expected = self.params.tensors()[i].shape();
            match archive.get(name) {
                None if strict => return Err(Error::Archive(format!("missing array {name:?}"))),
                None => {}
                Some(e) if e.shape != expected => {
                    if strict {
                        return Err(Error::Archive(format!(
                            "array {name:?} has shape {:?}, expected {expected:?}",
                            e.shape
                        )));
                    }
                }
                Some(e) => updates.push((i, Tensor::from_f32(e.shape.clone(), &e.data)?)),
            }
        }
        for (i, t) in updates {
            self.params.tensors_mut()[i] = t;
        }
        Ok(())
    }
}

/// Returns `net` with parameters taken from `archive`.
pub fn load_weights<T: Real>(archive: &WeightArchive, mut net: DfeNetwork<T>, strict: bool) -> Result<DfeNetwork<T>> {
    net.load_weights(archive, strict)?;
    Ok(net)
}
