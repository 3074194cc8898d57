//! Unsupervised change/no-change losses built on the differentiation tape.
//!
//! Every function records its computation on the supplied [`Tape`] and
//! returns the scalar node, so the same code serves optimization and
//! gradient checking.

use std::fmt;
use std::rc::Rc;

use crate::tensor::{Metric, Real, Tape, Var};
use crate::{contract, Result};

/// Lower/upper clamp applied to `mean(P_c)` before the sparsity sine.
pub const SPARSITY_CLAMP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha_img: f64,
    /// One weight per feature layer.
    pub alpha_feat: Vec<f64>,
    pub enable_img: bool,
    pub enable_feat: bool,
    pub enable_ctx: bool,
    pub enable_sparse: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_img: 1.0,
            alpha_feat: vec![1.0; 2],
            enable_img: true,
            enable_feat: true,
            enable_ctx: true,
            enable_sparse: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        contract!(
            self.alpha_img >= 0.0 && self.alpha_img.is_finite(),
            "alpha_img must be finite and non-negative, got {}",
            self.alpha_img
        );
        for (l, &a) in self.alpha_feat.iter().enumerate() {
            contract!(
                a >= 0.0 && a.is_finite(),
                "alpha_feat[{l}] must be finite and non-negative, got {a}"
            );
        }
        Ok(())
    }
}

/// Per-term loss values of one iteration. Disabled terms are reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub img: f64,
    pub feat: f64,
    pub ctx: f64,
    pub sparse: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.img, self.feat, self.ctx, self.sparse, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

impl fmt::Display for LossBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "img={} feat={} ctx={} sparse={} total={}",
            self.img, self.feat, self.ctx, self.sparse, self.total
        )
    }
}

/// Values of the terms that were evaluated; `None` marks a disabled term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub img: Option<f64>,
    pub feat: Option<f64>,
    pub ctx: Option<f64>,
    pub sparse: Option<f64>,
}

/// Unweighted sum of the enabled terms.
pub fn total_loss(parts: LossParts, weights: &LossWeights) -> LossBreakdown {
    let pick = |enabled: bool, v: Option<f64>| if enabled { v.unwrap_or(0.0) } else { 0.0 };
    let img = pick(weights.enable_img, parts.img);
    let feat = pick(weights.enable_feat, parts.feat);
    let ctx = pick(weights.enable_ctx, parts.ctx);
    let sparse = pick(weights.enable_sparse, parts.sparse);
    LossBreakdown {
        img,
        feat,
        ctx,
        sparse,
        total: img + feat + ctx + sparse,
    }
}

/// How the context term normalizes each layer's L1 distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CtxNormalization {
    /// Mean absolute difference per element.
    #[default]
    Mean,
    /// Raw sum of absolute differences.
    Sum,
}

impl CtxNormalization {
    pub fn name(self) -> &'static str {
        match self {
            CtxNormalization::Mean => "mean",
            CtxNormalization::Sum => "sum",
        }
    }
}

impl std::str::FromStr for CtxNormalization {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(CtxNormalization::Mean),
            "sum" => Ok(CtxNormalization::Sum),
            other => Err(crate::Error::Config(format!("unknown ctx normalization {other:?}"))),
        }
    }
}

/// Mean over pixels of `||w d||_M`; `diffs` is `1 x b x h x w`, `weights` `1 x 1 x h x w`.
pub fn weighted_mahalanobis<T: Real>(
    tape: &mut Tape<T>,
    diffs: Var,
    weights: Var,
    metric: &Rc<Metric<T>>,
) -> Result<Var> {
    tape.weighted_mahalanobis(diffs, weights, Rc::clone(metric))
}

/// `-alpha * ||P_c d||_M + ||(1 - P_c) d||_M` for one pair of difference vectors.
fn change_nochange<T: Real>(
    tape: &mut Tape<T>,
    diffs: Var,
    pc: Var,
    metric: &Rc<Metric<T>>,
    alpha: f64,
) -> Result<Var> {
    let pnc = tape.one_minus(pc)?;
    let change = weighted_mahalanobis(tape, diffs, pc, metric)?;
    let nochange = weighted_mahalanobis(tape, diffs, pnc, metric)?;
    let change = tape.scale(change, T::from_f64_lossy(-alpha))?;
    tape.add(change, nochange)
}

/// Image-domain change/no-change loss on the augmented pair.
pub fn image_domain_loss<T: Real>(
    tape: &mut Tape<T>,
    i1: Var,
    i2: Var,
    pc: Var,
    metric: &Rc<Metric<T>>,
    alpha_img: f64,
) -> Result<Var> {
    contract!(
        tape.value(i1).shape() == tape.value(i2).shape(),
        "image loss operands differ in shape: {:?} vs {:?}",
        tape.value(i1).shape(),
        tape.value(i2).shape()
    );
    let d = tape.sub(i1, i2)?;
    change_nochange(tape, d, pc, metric, alpha_img)
}

/// Feature-domain loss summed over layers, with `P_c` downsampled to each
/// layer's grid by nearest neighbour.
pub fn feature_domain_loss<T: Real>(
    tape: &mut Tape<T>,
    feats1: &[Var],
    feats2: &[Var],
    pc: Var,
    alpha_feat: &[f64],
    metrics: &[Rc<Metric<T>>],
) -> Result<Var> {
    contract!(
        feats1.len() == feats2.len() && feats1.len() == alpha_feat.len() && feats1.len() == metrics.len(),
        "feature loss expects matching layer counts, got {} / {} features, {} weights, {} metrics",
        feats1.len(),
        feats2.len(),
        alpha_feat.len(),
        metrics.len()
    );
    contract!(!feats1.is_empty(), "feature loss needs at least one layer");
    let mut total: Option<Var> = None;
    for l in 0..feats1.len() {
        let (_, _, h, w) = tape.value(feats1[l]).dims4()?;
        let d = tape.sub(feats1[l], feats2[l])?;
        let pl = tape.nearest_downsample(pc, h, w)?;
        let term = change_nochange(tape, d, pl, &metrics[l], alpha_feat[l])?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one layer"))
}

/// L1 distance between original and augmented features, summed over the
/// supplied tensors (all layers of both temporal branches).
pub fn context_consistency_loss<T: Real>(
    tape: &mut Tape<T>,
    original: &[Var],
    augmented: &[Var],
    normalization: CtxNormalization,
    stop_gradient: bool,
) -> Result<Var> {
    contract!(
        original.len() == augmented.len() && !original.is_empty(),
        "context loss expects matching non-empty lists, got {} and {}",
        original.len(),
        augmented.len()
    );
    let mut total: Option<Var> = None;
    for (&o, &a) in original.iter().zip(augmented) {
        contract!(
            tape.value(o).shape() == tape.value(a).shape(),
            "context loss operands differ in shape: {:?} vs {:?}",
            tape.value(o).shape(),
            tape.value(a).shape()
        );
        let o = if stop_gradient { tape.detach(o) } else { o };
        let d = tape.sub(o, a)?;
        let d = tape.abs(d)?;
        let term = match normalization {
            CtxNormalization::Mean => tape.mean_all(d)?,
            CtxNormalization::Sum => tape.sum_all(d)?,
        };
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("at least one tensor"))
}

/// `1 / sin(pi * mean(P_c))` with the mean clamped to `[delta, 1 - delta]`.
pub fn sparsity_penalty<T: Real>(tape: &mut Tape<T>, pc: Var) -> Result<Var> {
    let m = tape.mean_all(pc)?;
    let m = tape.clamp(
        m,
        T::from_f64_lossy(SPARSITY_CLAMP),
        T::from_f64_lossy(1.0 - SPARSITY_CLAMP),
    )?;
    tape.inv_sin_pi(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn scalar(tape: &Tape<f64>, v: Var) -> f64 {
        tape.value(v).item().unwrap()
    }

    fn diag(values: &[f64]) -> Rc<Metric<f64>> {
        Rc::new(Metric::Diagonal(values.to_vec()))
    }

    #[test]
    fn weighted_norm_homogeneity() {
        let mut tape = Tape::new();
        let d = tape.constant(t(&[1, 2, 1, 1], &[1.0, 0.0]));
        let w = tape.constant(t(&[1, 1, 1, 1], &[0.8]));
        let v = weighted_mahalanobis(&mut tape, d, w, &diag(&[0.25, 1.0])).unwrap();
        assert!((scalar(&tape, v) - 0.4).abs() < 1e-9);
    }

    #[test]
    fn weighted_norm_collapses_to_euclidean() {
        let mut tape = Tape::new();
        let d = tape.constant(t(&[1, 2, 1, 2], &[3.0, 1.0, 4.0, 0.0]));
        let w = tape.constant(Tensor::full(&[1, 1, 1, 2], 1.0));
        let v = weighted_mahalanobis(&mut tape, d, w, &Rc::new(Metric::Identity)).unwrap();
        assert!((scalar(&tape, v) - 3.0).abs() < 1e-9);
        let z = tape.constant(Tensor::zeros(&[1, 1, 1, 2]));
        let v = weighted_mahalanobis(&mut tape, d, z, &Rc::new(Metric::Identity)).unwrap();
        assert!(scalar(&tape, v) <= 1e-6);
    }

    #[test]
    fn weighted_norm_shape_mismatch() {
        let mut tape = Tape::new();
        let d = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
        let w = tape.constant(Tensor::zeros(&[1, 1, 2, 3]));
        assert!(weighted_mahalanobis(&mut tape, d, w, &Rc::new(Metric::Identity)).is_err());
        let w = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
        assert!(weighted_mahalanobis(&mut tape, d, w, &diag(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn image_loss_hand_value() {
        let mut tape = Tape::new();
        let i1 = tape.constant(t(&[1, 2, 1, 1], &[1.0, 0.0]));
        let i2 = tape.constant(t(&[1, 2, 1, 1], &[0.0, 0.0]));
        let pc = tape.constant(t(&[1, 1, 1, 1], &[0.8]));
        let v = image_domain_loss(&mut tape, i1, i2, pc, &diag(&[0.25, 1.0]), 1.0).unwrap();
        assert!((scalar(&tape, v) + 0.3).abs() < 1e-9);
    }

    #[test]
    fn image_loss_symmetry_at_one_half() {
        let d = [0.3, -0.1, 0.5, 0.2, 0.0, 0.7, -0.4, 0.1];
        for alpha in [1.0, 0.5, 2.0] {
            let mut tape = Tape::new();
            let i1 = tape.constant(t(&[1, 2, 2, 2], &d));
            let i2 = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
            let pc = tape.constant(Tensor::full(&[1, 1, 2, 2], 0.5));
            let metric = diag(&[2.0, 0.5]);
            let v = image_domain_loss(&mut tape, i1, i2, pc, &metric, alpha).unwrap();
            let ones = tape.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
            let diff = tape.sub(i1, i2).unwrap();
            let full = weighted_mahalanobis(&mut tape, diff, ones, &metric).unwrap();
            let expected = (1.0 - alpha) * 0.5 * scalar(&tape, full);
            assert!((scalar(&tape, v) - expected).abs() < 1e-9, "alpha {alpha}");
        }
    }

    #[test]
    fn image_loss_identical_images() {
        let mut tape = Tape::new();
        let img = t(&[1, 3, 2, 2], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 0.3]);
        let i1 = tape.constant(img.clone());
        let i2 = tape.constant(img);
        let pc = tape.constant(t(&[1, 1, 2, 2], &[0.1, 0.9, 0.3, 0.6]));
        let v = image_domain_loss(&mut tape, i1, i2, pc, &Rc::new(Metric::Identity), 1.0).unwrap();
        assert!(scalar(&tape, v).abs() < 1e-5);
    }

    #[test]
    fn image_loss_gradient_pushes_change_up() {
        let (h, w) = (2, 3);
        let d = [0.3, 0.0, 0.5, 0.2, 0.0, 0.7, -0.4, 0.0, 0.1, 0.9, 0.0, -0.2];
        let mut tape = Tape::new();
        let i1 = tape.constant(t(&[1, 2, h, w], &d));
        let i2 = tape.constant(Tensor::zeros(&[1, 2, h, w]));
        let pc = tape.param(t(&[1, 1, h, w], &[0.2, 0.4, 0.6, 0.8, 0.5, 0.3]));
        let metric = diag(&[1.5, 0.7]);
        let v = image_domain_loss(&mut tape, i1, i2, pc, &metric, 1.0).unwrap();
        let g = tape.backward(v).unwrap();
        let grad = g.get(pc).unwrap().data();
        for p in 0..h * w {
            let (a, b) = (d[p], d[h * w + p]);
            let norm = (1.5 * a * a + 0.7 * b * b).sqrt();
            let expected = -2.0 * norm / (h * w) as f64;
            assert!((grad[p] - expected).abs() < 1e-6, "pixel {p}: {} vs {expected}", grad[p]);
            assert!(grad[p] <= 0.0);
            if norm == 0.0 {
                assert!(grad[p].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn image_loss_scale_homogeneity() {
        let d = [0.3, -0.1, 0.5, 0.2, 0.05, 0.7, -0.4, 0.1];
        let eval = |c: f64| {
            let mut tape = Tape::new();
            let scaled: Vec<f64> = d.iter().map(|v| v * c).collect();
            let i1 = tape.constant(t(&[1, 2, 2, 2], &scaled));
            let i2 = tape.constant(Tensor::zeros(&[1, 2, 2, 2]));
            let pc = tape.constant(t(&[1, 1, 2, 2], &[0.2, 0.9, 0.4, 0.6]));
            let v = image_domain_loss(&mut tape, i1, i2, pc, &diag(&[2.0, 3.0]), 1.0).unwrap();
            scalar(&tape, v)
        };
        let base = eval(1.0);
        for c in [0.5, 3.0, 10.0] {
            assert!((eval(c) - c * base).abs() < 1e-6 * c.max(1.0));
        }
    }

    #[test]
    fn feature_loss_hand_value() {
        let mut tape = Tape::new();
        let f1 = tape.constant(t(&[1, 2, 1, 1], &[1.0, 0.0]));
        let f2 = tape.constant(t(&[1, 2, 1, 1], &[0.0, 0.0]));
        let pc = tape.constant(Tensor::full(&[1, 1, 4, 4], 0.8));
        let v = feature_domain_loss(&mut tape, &[f1], &[f2], pc, &[1.0], &[Rc::new(Metric::Identity)]).unwrap();
        assert!((scalar(&tape, v) + 0.6).abs() < 1e-9);
    }

    #[test]
    fn feature_loss_zero_cases() {
        let a: Vec<f64> = (0..2 * 2 * 2).map(|i| i as f64 / 7.0).collect();
        let b: Vec<f64> = (0..2 * 2 * 2).map(|i| (i * i) as f64 / 11.0).collect();
        let mut tape = Tape::new();
        let f1 = tape.constant(t(&[1, 2, 2, 2], &a));
        let f2 = tape.constant(t(&[1, 2, 2, 2], &b));
        let metrics = [Rc::new(Metric::Identity)];
        let pc = tape.constant(t(&[1, 1, 4, 4], &[0.3; 16]));
        let same = feature_domain_loss(&mut tape, &[f1], &[f1], pc, &[1.0], &metrics).unwrap();
        assert!(scalar(&tape, same).abs() < 1e-5);
        let half = tape.constant(Tensor::full(&[1, 1, 4, 4], 0.5));
        let sym = feature_domain_loss(&mut tape, &[f1], &[f2], half, &[1.0], &metrics).unwrap();
        assert!(scalar(&tape, sym).abs() < 1e-9);
        assert!(feature_domain_loss(&mut tape, &[f1], &[f2, f1], pc, &[1.0], &metrics).is_err());
    }

    #[test]
    fn context_loss_hand_value() {
        let mut tape = Tape::new();
        let a1 = tape.constant(t(&[1, 1, 1, 1], &[0.3]));
        let b1 = tape.constant(t(&[1, 1, 1, 1], &[0.7]));
        let a2 = tape.constant(t(&[1, 1, 1, 1], &[0.5]));
        let v = context_consistency_loss(&mut tape, &[a1, a2], &[b1, a2], CtxNormalization::Mean, false).unwrap();
        assert!((scalar(&tape, v) - 0.4).abs() < 1e-12);
        let same = context_consistency_loss(&mut tape, &[a1, a2], &[a1, a2], CtxNormalization::Sum, false).unwrap();
        assert_eq!(scalar(&tape, same), 0.0);
    }

    #[test]
    fn context_loss_normalizations() {
        let mut tape = Tape::new();
        let o = tape.constant(t(&[1, 1, 2, 2], &[0.0, 1.0, 2.0, 3.0]));
        let a = tape.constant(t(&[1, 1, 2, 2], &[1.0, 1.0, 0.0, 3.5]));
        let mean = context_consistency_loss(&mut tape, &[o], &[a], CtxNormalization::Mean, false).unwrap();
        let sum = context_consistency_loss(&mut tape, &[o], &[a], CtxNormalization::Sum, false).unwrap();
        assert!((scalar(&tape, sum) - 3.5).abs() < 1e-12);
        assert!((scalar(&tape, mean) - 3.5 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn context_loss_stop_gradient() {
        let mut tape = Tape::new();
        let o = tape.param(t(&[1, 1, 1, 2], &[0.0, 1.0]));
        let a = tape.param(t(&[1, 1, 1, 2], &[1.0, 0.0]));
        let v = context_consistency_loss(&mut tape, &[o], &[a], CtxNormalization::Mean, true).unwrap();
        let g = tape.backward(v).unwrap();
        assert_eq!(g.get(o).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.get(a).unwrap().data(), &[0.5, -0.5]);
    }

    fn sparse_of(mean: f64) -> f64 {
        let mut tape = Tape::new();
        let pc = tape.constant(Tensor::full(&[1, 1, 2, 2], mean));
        let v = sparsity_penalty(&mut tape, pc).unwrap();
        scalar(&tape, v)
    }

    #[test]
    fn sparsity_hand_values() {
        assert_eq!(sparse_of(0.5), 1.0);
        assert!((sparse_of(0.25) - std::f64::consts::SQRT_2).abs() < 1e-12);
        let clamped = 1.0 / (std::f64::consts::PI * 1e-3).sin();
        assert!((clamped - 318.31).abs() < 0.01);
        assert!((sparse_of(0.0) - clamped).abs() < 1e-9);
        assert!((sparse_of(1.0) - clamped).abs() < 1e-6);
        assert!((sparse_of(1e-5) - clamped).abs() < 1e-9);
    }

    #[test]
    fn sparsity_gradient_vanishes_at_one_half() {
        let mut tape = Tape::new();
        let pc = tape.param(Tensor::full(&[1, 1, 2, 2], 0.5));
        let v = sparsity_penalty(&mut tape, pc).unwrap();
        let g = tape.backward(v).unwrap();
        assert!(g.get(pc).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn total_loss_examples() {
        let all = LossWeights::default();
        let parts = LossParts {
            img: Some(-0.3),
            feat: Some(-0.6),
            ctx: Some(0.4),
            sparse: Some(1.0),
        };
        let b = total_loss(parts, &all);
        assert!((b.total - 0.5).abs() < 1e-12);
        let no_ctx = LossWeights {
            enable_ctx: false,
            ..all.clone()
        };
        let c = total_loss(parts, &no_ctx);
        assert_eq!(c.ctx, 0.0);
        assert!((b.total - c.total - 0.4).abs() < 1e-12);
        let only_sparse = LossWeights {
            enable_img: false,
            enable_feat: false,
            enable_ctx: false,
            ..all
        };
        let s = total_loss(
            LossParts {
                sparse: Some(sparse_of(0.5)),
                ..LossParts::default()
            },
            &only_sparse,
        );
        assert_eq!(s.total, 1.0);
    }

    #[test]
    fn negative_alpha_rejected() {
        let w = LossWeights {
            alpha_feat: vec![1.0, -0.1],
            ..LossWeights::default()
        };
        assert!(w.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sparsity_symmetric_with_minimum_one(m in 0.0f64..=1.0) {
                let a = sparse_of(m);
                let b = sparse_of(1.0 - m);
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
                prop_assert!(a >= 1.0);
            }

            #[test]
            fn context_loss_nonnegative(
                a in proptest::collection::vec(-5.0f64..5.0, 6),
                b in proptest::collection::vec(-5.0f64..5.0, 6),
            ) {
                let mut tape = Tape::new();
                let o = tape.constant(t(&[1, 1, 2, 3], &a));
                let g = tape.constant(t(&[1, 1, 2, 3], &b));
                let v = context_consistency_loss(&mut tape, &[o], &[g], CtxNormalization::Mean, false).unwrap();
                prop_assert!(scalar(&tape, v) >= 0.0);
            }

            #[test]
            fn toggling_a_term_removes_exactly_its_value(
                img in -5.0f64..5.0, feat in -5.0f64..5.0, ctx in 0.0f64..5.0, sparse in 1.0f64..300.0,
                mask in 0u8..16,
            ) {
                let parts = LossParts { img: Some(img), feat: Some(feat), ctx: Some(ctx), sparse: Some(sparse) };
                let w = LossWeights {
                    enable_img: mask & 1 != 0,
                    enable_feat: mask & 2 != 0,
                    enable_ctx: mask & 4 != 0,
                    enable_sparse: mask & 8 != 0,
                    ..LossWeights::default()
                };
                let b = total_loss(parts, &w);
                let expected = [(w.enable_img, img), (w.enable_feat, feat), (w.enable_ctx, ctx), (w.enable_sparse, sparse)]
                    .iter().filter(|(e, _)| *e).map(|(_, v)| v).sum::<f64>();
                prop_assert!((b.total - expected).abs() < 1e-9);
                prop_assert!((b.total - (b.img + b.feat + b.ctx + b.sparse)).abs() < 1e-12);
            }
        }
    }
}
