//! Per-image optimization: prepare the pair once, then repeat
//! augment, forward, loss, backward and Adam for a fixed number of iterations.

use std::rc::Rc;
use std::time::Instant;

use crate::augment::{augment_pair, derive_seed, AugmentationPolicy};
use crate::losses::{
    context_consistency_loss, feature_domain_loss, image_domain_loss, sparsity_penalty, total_loss, CtxNormalization,
    LossBreakdown, LossParts, LossWeights,
};
use crate::networks::{band_select, DcpgConfig, DcpgNetwork, DfeConfig, DfeNetwork, WeightArchive};
use crate::preprocess::{
    apply_pcc, default_beta, difference_image, downsample_uniform, estimate_covariance, fit_pcc, ColorMapping,
    CovarianceModel, DifferenceImage, KernelKind, MultiBandImage, PolynomialKernel,
};
use crate::tensor::{Adam, AdamConfig, Metric, Real, Tape, Tensor, Var};
use crate::{contract, Error, Result};

/// Relative ridge on the frozen per-channel feature variances.
const FEATURE_RIDGE_SCALE: f64 = 1e-6;
const MIN_FEATURE_RIDGE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub threshold: f64,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub dcpg_blocks: usize,
    pub dcpg_channels: usize,
    pub dfe_layers: usize,
    pub dfe_trainable: bool,
    pub dfe_normalize_input: bool,
    /// Require a supplied weight archive to match the extractor catalog exactly.
    pub strict_weights: bool,
    pub augmentation: AugmentationPolicy,
    /// Bands forming the 3-channel view fed to the feature extractor.
    pub band_mapping: Option<[usize; 3]>,
    pub pcc_enabled: bool,
    pub pcc_kernel: KernelKind,
    /// Sampling stride for the color-correction fit; derived from the size when `None`.
    pub pcc_beta: Option<usize>,
    pub ctx_normalization: CtxNormalization,
    pub ctx_stop_gradient: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 80,
            learning_rate: 1e-5,
            threshold: 0.5,
            seed: 0,
            loss_weights: LossWeights::default(),
            dcpg_blocks: 32,
            dcpg_channels: 32,
            dfe_layers: 2,
            dfe_trainable: true,
            dfe_normalize_input: true,
            strict_weights: true,
            augmentation: AugmentationPolicy::default(),
            band_mapping: None,
            pcc_enabled: true,
            pcc_kernel: KernelKind::Root2,
            pcc_beta: None,
            ctx_normalization: CtxNormalization::Mean,
            ctx_stop_gradient: false,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(
            self.threshold > 0.0 && self.threshold < 1.0,
            "threshold must lie in (0, 1), got {}",
            self.threshold
        );
        contract!(
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            "learning rate must be finite and non-negative, got {}",
            self.learning_rate
        );
        contract!(
            self.loss_weights.alpha_feat.len() == self.dfe_layers,
            "{} feature weights given for {} extractor layers",
            self.loss_weights.alpha_feat.len(),
            self.dfe_layers
        );
        self.loss_weights.validate()?;
        self.augmentation.validate()?;
        self.dcpg_config().validate()?;
        self.dfe_config()?.validate()
    }

    pub fn dcpg_config(&self) -> DcpgConfig {
        DcpgConfig {
            blocks: self.dcpg_blocks,
            channels: self.dcpg_channels,
            kernel_size: 3,
            input_channels: 1,
            seed: derive_seed(self.seed, &[1]),
        }
    }

    pub fn dfe_config(&self) -> Result<DfeConfig> {
        let mut cfg = DfeConfig::vgg16(self.dfe_layers)?;
        cfg.trainable = self.dfe_trainable;
        cfg.normalize_input = self.dfe_normalize_input;
        cfg.seed = derive_seed(self.seed, &[2]);
        Ok(cfg)
    }

    pub fn augmentation_seed(&self) -> u64 {
        derive_seed(self.seed, &[3])
    }

    fn needs_features(&self) -> bool {
        self.loss_weights.enable_feat || self.loss_weights.enable_ctx
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// Everything computed once before the first iteration.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// Color-corrected pre-change image.
    pub pre: MultiBandImage,
    /// Post-change image.
    pub post: MultiBandImage,
    pub mapping: Option<ColorMapping>,
    pub covariance: CovarianceModel,
    pub difference: DifferenceImage,
    /// 3-channel views of `pre` and `post` for the feature extractor.
    pub pre_rgb: MultiBandImage,
    pub post_rgb: MultiBandImage,
    /// Frozen inverse variances of the feature differences, one vector per layer.
    pub feature_inverse_variances: Vec<Vec<f64>>,
}

impl Prepared {
    pub fn height(&self) -> usize {
        self.pre.height()
    }

    pub fn width(&self) -> usize {
        self.pre.width()
    }

    pub fn difference_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_f32(vec![1, 1, self.height(), self.width()], self.difference.values()).expect("extent matches")
    }

    fn image_metric<T: Real>(&self) -> Rc<Metric<T>> {
        let inv = self.covariance.inverse();
        let b = inv.nrows();
        let data = (0..b * b).map(|i| T::from_f64_lossy(inv[(i / b, i % b)])).collect();
        Rc::new(Metric::Full { dim: b, inverse: data })
    }
}

/// Runs color correction, covariance estimation and the difference image,
/// then freezes the per-layer feature metrics with the initial extractor.
pub fn prepare(pre: &MultiBandImage, post: &MultiBandImage, config: &EngineConfig, dfe: &DfeNetwork) -> Result<Prepared> {
    config.validate()?;
    if !pre.same_shape(post) {
        return Err(Error::Registration {
            pre: pre.describe(),
            post: post.describe(),
        });
    }
    let mapping = if config.pcc_enabled {
        let beta = config.pcc_beta.unwrap_or_else(|| default_beta(pre.height(), pre.width()));
        let s1 = downsample_uniform(pre, beta)?;
        let s2 = downsample_uniform(post, beta)?;
        Some(fit_pcc(&s1, &s2, PolynomialKernel::new(config.pcc_kernel, pre.bands()))?)
    } else {
        None
    };
    let corrected = match &mapping {
        Some(m) => apply_pcc(pre, m)?,
        None => pre.clone(),
    };
    let vectors = crate::preprocess::difference_vectors(&corrected, post)?;
    let covariance = estimate_covariance(&vectors, pre.bands())?;
    let difference = difference_image(&corrected, post, &covariance)?;

    let band_mapping = match config.band_mapping {
        Some(m) => m,
        None => {
            contract!(
                pre.bands() >= 3,
                "{}-band input needs an explicit band mapping",
                pre.bands()
            );
            [0, 1, 2]
        }
    };
    let pre_rgb = band_select(&corrected, band_mapping)?;
    let post_rgb = band_select(post, band_mapping)?;

    let feature_inverse_variances = if config.needs_features() {
        let f1 = dfe.features(&dfe.input_tensor(&pre_rgb)?)?;
        let f2 = dfe.features(&dfe.input_tensor(&post_rgb)?)?;
        f1.iter().zip(&f2).map(|(a, b)| channel_inverse_variances(a, b)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    Ok(Prepared {
        pre: corrected,
        post: post.clone(),
        mapping,
        covariance,
        difference,
        pre_rgb,
        post_rgb,
        feature_inverse_variances,
    })
}

/// `1 / (var_c + ridge)` of `a - b` per channel over spatial positions.
fn channel_inverse_variances(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<Vec<f64>> {
    let (_, c, h, w) = a.dims4()?;
    let n = h * w;
    let vars: Vec<f64> = (0..c)
        .map(|ch| {
            let range = ch * n..(ch + 1) * n;
            let d: Vec<f64> = a.data()[range.clone()]
                .iter()
                .zip(&b.data()[range])
                .map(|(&x, &y)| x as f64 - y as f64)
                .collect();
            let mean = d.iter().sum::<f64>() / n as f64;
            let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
            d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / denom
        })
        .collect();
    let ridge = (FEATURE_RIDGE_SCALE * vars.iter().sum::<f64>() / c as f64).max(MIN_FEATURE_RIDGE);
    Ok(vars.iter().map(|v| 1.0 / (v + ridge)).collect())
}

/// Fixed operands of one evaluation of the objective.
pub struct ObjectiveInputs<T: Real> {
    /// `1 x 1 x h x w` difference image.
    pub difference: Tensor<T>,
    /// `1 x b x h x w` corrected pre-change and post-change images.
    pub pre: Tensor<T>,
    pub post: Tensor<T>,
    pub image_metric: Rc<Metric<T>>,
    /// `1 x 3 x h x w` extractor inputs, original and augmented.
    pub pre_rgb: Tensor<T>,
    pub post_rgb: Tensor<T>,
    pub pre_aug: Tensor<T>,
    pub post_aug: Tensor<T>,
    pub feature_metrics: Vec<Rc<Metric<T>>>,
}

/// Which loss settings the objective uses.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectiveSettings {
    pub weights: LossWeights,
    pub ctx_normalization: CtxNormalization,
    pub ctx_stop_gradient: bool,
}

impl ObjectiveSettings {
    pub fn from_config(config: &EngineConfig) -> Self {
        Self {
            weights: config.loss_weights.clone(),
            ctx_normalization: config.ctx_normalization,
            ctx_stop_gradient: config.ctx_stop_gradient,
        }
    }
}

/// Scalar nodes of the evaluated terms; disabled terms are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub img: Option<Var>,
    pub feat: Option<Var>,
    pub ctx: Option<Var>,
    pub sparse: Option<Var>,
    /// `None` when every term is disabled.
    pub total: Option<Var>,
}

impl LossNodes {
    pub fn breakdown<T: Real>(&self, tape: &Tape<T>, weights: &LossWeights) -> LossBreakdown {
        let read = |v: Option<Var>| v.map(|v| tape.value(v).data()[0].as_f64());
        total_loss(
            LossParts {
                img: read(self.img),
                feat: read(self.feat),
                ctx: read(self.ctx),
                sparse: read(self.sparse),
            },
            weights,
        )
    }
}

/// Records every enabled loss term given a change-probability node `pc`.
pub fn loss_terms<T: Real>(
    tape: &mut Tape<T>,
    pc: Var,
    inputs: &ObjectiveInputs<T>,
    dfe: &DfeNetwork<T>,
    dfe_vars: &[Var],
    settings: &ObjectiveSettings,
) -> Result<LossNodes> {
    let w = &settings.weights;
    let img = if w.enable_img {
        let i1 = tape.constant(inputs.pre.clone());
        let i2 = tape.constant(inputs.post.clone());
        Some(image_domain_loss(tape, i1, i2, pc, &inputs.image_metric, w.alpha_img)?)
    } else {
        None
    };
    let (mut feat, mut ctx) = (None, None);
    if w.enable_feat || w.enable_ctx {
        let x1 = tape.constant(inputs.pre_rgb.clone());
        let x2 = tape.constant(inputs.post_rgb.clone());
        let f1 = dfe.forward(tape, dfe_vars, x1)?;
        let f2 = dfe.forward(tape, dfe_vars, x2)?;
        if w.enable_feat {
            feat = Some(feature_domain_loss(tape, &f1, &f2, pc, &w.alpha_feat, &inputs.feature_metrics)?);
        }
        if w.enable_ctx {
            let a1 = tape.constant(inputs.pre_aug.clone());
            let a2 = tape.constant(inputs.post_aug.clone());
            let fa1 = dfe.forward(tape, dfe_vars, a1)?;
            let fa2 = dfe.forward(tape, dfe_vars, a2)?;
            let original: Vec<Var> = f1.into_iter().chain(f2).collect();
            let augmented: Vec<Var> = fa1.into_iter().chain(fa2).collect();
            ctx = Some(context_consistency_loss(
                tape,
                &original,
                &augmented,
                settings.ctx_normalization,
                settings.ctx_stop_gradient,
            )?);
        }
    }
    let sparse = if w.enable_sparse {
        Some(sparsity_penalty(tape, pc)?)
    } else {
        None
    };
    let mut total = None;
    for v in [img, feat, ctx, sparse].into_iter().flatten() {
        total = Some(match total {
            Some(t) => tape.add(t, v)?,
            None => v,
        });
    }
    Ok(LossNodes {
        img,
        feat,
        ctx,
        sparse,
        total,
    })
}

/// Generator forward pass followed by [`loss_terms`]; returns `(pc, nodes)`.
#[allow(clippy::too_many_arguments)]
pub fn objective<T: Real>(
    tape: &mut Tape<T>,
    inputs: &ObjectiveInputs<T>,
    dcpg: &DcpgNetwork<T>,
    dcpg_vars: &[Var],
    dfe: &DfeNetwork<T>,
    dfe_vars: &[Var],
    settings: &ObjectiveSettings,
) -> Result<(Var, LossNodes)> {
    let id = tape.constant(inputs.difference.clone());
    let pc = dcpg.forward(tape, dcpg_vars, id)?;
    let nodes = loss_terms(tape, pc, inputs, dfe, dfe_vars, settings)?;
    Ok((pc, nodes))
}

/// Mutable state of a run between iterations.
#[derive(Clone, Debug)]
pub struct RunState {
    iteration: usize,
    dcpg: DcpgNetwork,
    dfe: DfeNetwork,
    dcpg_adam: Adam,
    dfe_adam: Adam,
    loss_history: Vec<LossBreakdown>,
    current_pc: Tensor<f32>,
}

impl RunState {
    pub fn new(prepared: &Prepared, config: &EngineConfig, dcpg: DcpgNetwork, dfe: DfeNetwork) -> Result<Self> {
        let adam = config.adam();
        let current_pc = dcpg.predict(&prepared.difference_tensor())?;
        Ok(Self {
            iteration: 0,
            dcpg_adam: Adam::new(adam, dcpg.params().tensors()),
            dfe_adam: Adam::new(adam, dfe.params().tensors()),
            dcpg,
            dfe,
            loss_history: Vec::new(),
            current_pc,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn dcpg(&self) -> &DcpgNetwork {
        &self.dcpg
    }

    pub fn dcpg_mut(&mut self) -> &mut DcpgNetwork {
        &mut self.dcpg
    }

    pub fn dfe(&self) -> &DfeNetwork {
        &self.dfe
    }

    pub fn loss_history(&self) -> &[LossBreakdown] {
        &self.loss_history
    }

    /// Map produced by the parameters before the most recent update.
    pub fn current_pc(&self) -> &Tensor<f32> {
        &self.current_pc
    }

    fn inputs(&self, prepared: &Prepared, config: &EngineConfig) -> Result<ObjectiveInputs<f32>> {
        let needs = config.needs_features();
        let (pre_rgb, post_rgb, pre_aug, post_aug) = if needs {
            let (a1, a2) = augment_pair(
                &prepared.pre_rgb,
                &prepared.post_rgb,
                &config.augmentation,
                config.augmentation_seed(),
                self.iteration,
            )?;
            (
                self.dfe.input_tensor(&prepared.pre_rgb)?,
                self.dfe.input_tensor(&prepared.post_rgb)?,
                self.dfe.input_tensor(&a1)?,
                self.dfe.input_tensor(&a2)?,
            )
        } else {
            let empty = Tensor::zeros(&[0]);
            (empty.clone(), empty.clone(), empty.clone(), empty)
        };
        Ok(ObjectiveInputs {
            difference: prepared.difference_tensor(),
            pre: prepared.pre.to_tensor(),
            post: prepared.post.to_tensor(),
            image_metric: prepared.image_metric(),
            pre_rgb,
            post_rgb,
            pre_aug,
            post_aug,
            feature_metrics: prepared
                .feature_inverse_variances
                .iter()
                .map(|v| Rc::new(Metric::Diagonal(v.iter().map(|&x| x as f32).collect())))
                .collect(),
        })
    }

    /// One iteration; aborts with [`Error::NonFiniteLoss`] on a non-finite loss.
    pub fn step(&mut self, prepared: &Prepared, config: &EngineConfig) -> Result<LossBreakdown> {
        contract!(
            self.iteration < config.iterations,
            "iteration {} is past the configured {}",
            self.iteration,
            config.iterations
        );
        let inputs = self.inputs(prepared, config)?;
        let settings = ObjectiveSettings::from_config(config);
        let mut tape = Tape::new();
        let dcpg_vars = self.dcpg.bind(&mut tape, true);
        let dfe_vars = self.dfe.bind(&mut tape);
        let (pc, nodes) = objective(&mut tape, &inputs, &self.dcpg, &dcpg_vars, &self.dfe, &dfe_vars, &settings)?;
        let breakdown = nodes.breakdown(&tape, &settings.weights);
        if !breakdown.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                breakdown,
            });
        }
        self.current_pc = tape.value(pc).clone();
        if let Some(total) = nodes.total {
            let mut grads = tape.backward(total)?;
            let g: Vec<Tensor<f32>> = dcpg_vars.iter().map(|&v| grads.take(v).expect("tracked")).collect();
            self.dcpg_adam.step(self.dcpg.params_mut().tensors_mut(), &g)?;
            if self.dfe.trainable() {
                let g: Vec<Tensor<f32>> = dfe_vars.iter().map(|&v| grads.take(v).expect("tracked")).collect();
                self.dfe_adam.step(self.dfe.params_mut().tensors_mut(), &g)?;
            }
        }
        self.iteration += 1;
        self.loss_history.push(breakdown);
        Ok(breakdown)
    }
}

/// Output of a complete run.
#[derive(Clone, Debug)]
pub struct RunResult {
    /// Final `h x w` change probabilities, row-major.
    pub probability: Vec<f32>,
    /// `probability >= threshold`.
    pub mask: Vec<bool>,
    pub height: usize,
    pub width: usize,
    pub loss_history: Vec<LossBreakdown>,
    pub prepared: Prepared,
    pub dfe_fingerprint_initial: String,
    pub dfe_fingerprint_final: String,
    pub seconds: f64,
}

/// Builds the networks for `config`, loading extractor weights when given.
pub fn build_networks(config: &EngineConfig, weights: Option<&WeightArchive>) -> Result<(DcpgNetwork, DfeNetwork)> {
    config.validate()?;
    let dcpg = DcpgNetwork::new(config.dcpg_config())?;
    let mut dfe = DfeNetwork::new(config.dfe_config()?)?;
    if let Some(archive) = weights {
        dfe.load_weights(archive, config.strict_weights)?;
    }
    Ok((dcpg, dfe))
}

/// `mask = [pc >= tau]`.
pub fn threshold_map(pc: &[f32], tau: f64) -> Vec<bool> {
    pc.iter().map(|&p| p as f64 >= tau).collect()
}

/// Prepares the pair, runs every iteration, and thresholds the final map.
pub fn run(
    pre: &MultiBandImage,
    post: &MultiBandImage,
    config: &EngineConfig,
    weights: Option<&WeightArchive>,
) -> Result<RunResult> {
    run_with_progress(pre, post, config, weights, |_, _| {})
}

/// [`run`] with a callback after every iteration.
pub fn run_with_progress(
    pre: &MultiBandImage,
    post: &MultiBandImage,
    config: &EngineConfig,
    weights: Option<&WeightArchive>,
    mut progress: impl FnMut(usize, &LossBreakdown),
) -> Result<RunResult> {
    let start = Instant::now();
    let (dcpg, dfe) = build_networks(config, weights)?;
    let prepared = prepare(pre, post, config, &dfe)?;
    let dfe_fingerprint_initial = dfe.params().fingerprint();
    let mut state = RunState::new(&prepared, config, dcpg, dfe)?;
    while state.iteration() < config.iterations {
        let b = state.step(&prepared, config)?;
        progress(state.iteration(), &b);
    }
    let pc = state.dcpg().predict(&prepared.difference_tensor())?;
    let probability = pc.into_data();
    let mask = threshold_map(&probability, config.threshold);
    Ok(RunResult {
        mask,
        height: prepared.height(),
        width: prepared.width(),
        probability,
        loss_history: state.loss_history().to_vec(),
        dfe_fingerprint_initial,
        dfe_fingerprint_final: state.dfe().params().fingerprint(),
        prepared,
        seconds: start.elapsed().as_secs_f64(),
    })
}
