//! Pixel-level evaluation against a binary reference mask.

use crate::{contract, Error, Result};

pub const DEFAULT_THRESHOLDS: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Counts with change as the positive class.
pub fn confusion(mask: &[bool], reference: &[bool]) -> Result<ConfusionCounts> {
    contract!(
        mask.len() == reference.len(),
        "mask has {} pixels, reference has {}",
        mask.len(),
        reference.len()
    );
    let mut c = ConfusionCounts::default();
    for (&m, &r) in mask.iter().zip(reference) {
        match (m, r) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub oa: f64,
    /// Precision.
    pub ua: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// OA, UA, recall and F1; every 0/0 is reported as 0.
pub fn scores(c: &ConfusionCounts) -> Scores {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let ua = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Scores {
        oa: ratio(tp + tn, c.total() as f64),
        ua,
        recall,
        f1: ratio(2.0 * ua * recall, ua + recall),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` sorted by FPR, starting at `(0, 0)` and ending at `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

fn class_counts(reference: &[bool]) -> Result<(u64, u64)> {
    let pos = reference.iter().filter(|&&r| r).count() as u64;
    let neg = reference.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    Ok((pos, neg))
}

/// Sweeps `thresholds` uniform levels `k / (thresholds - 1)`, counting
/// `score >= level` as positive, and integrates the curve by trapezoids.
pub fn roc_auc(pc: &[f32], reference: &[bool], thresholds: usize) -> Result<RocCurve> {
    contract!(
        pc.len() == reference.len(),
        "map has {} pixels, reference has {}",
        pc.len(),
        reference.len()
    );
    contract!(thresholds >= 2, "ROC sweep needs at least 2 thresholds");
    let (pos, neg) = class_counts(reference)?;
    let levels = thresholds - 1;
    // Histogram of scores by the highest level they reach.
    let mut hist_pos = vec![0u64; thresholds];
    let mut hist_neg = vec![0u64; thresholds];
    for (&p, &r) in pc.iter().zip(reference) {
        let p = p as f64;
        let mut k = ((p * levels as f64).floor().max(0.0) as usize).min(levels);
        while k > 0 && p < k as f64 / levels as f64 {
            k -= 1;
        }
        while k < levels && p >= (k + 1) as f64 / levels as f64 {
            k += 1;
        }
        if r {
            hist_pos[k] += 1;
        } else {
            hist_neg[k] += 1;
        }
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    for k in (0..thresholds).rev() {
        tp += hist_pos[k];
        fp += hist_neg[k];
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    points.push((1.0, 1.0));
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// Probability that a random change pixel outscores a random no-change
/// pixel, ties counted as one half.
pub fn mann_whitney_auc(pc: &[f32], reference: &[bool]) -> Result<f64> {
    contract!(
        pc.len() == reference.len(),
        "map has {} pixels, reference has {}",
        pc.len(),
        reference.len()
    );
    let (pos, neg) = class_counts(reference)?;
    let mut order: Vec<usize> = (0..pc.len()).collect();
    order.sort_by(|&a, &b| pc[a].total_cmp(&pc[b]));
    let mut wins = 0.0f64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && pc[order[j]] == pc[order[i]] {
            j += 1;
        }
        let tie_pos = order[i..j].iter().filter(|&&k| reference[k]).count() as u64;
        let tie_neg = (j - i) as u64 - tie_pos;
        wins += tie_pos as f64 * (neg_below as f64 + 0.5 * tie_neg as f64);
        neg_below += tie_neg;
        i = j;
    }
    Ok(wins / (pos as f64 * neg as f64))
}

pub const TP_COLOR: [u8; 3] = [0, 255, 0];
pub const TN_COLOR: [u8; 3] = [0, 0, 0];
pub const FP_COLOR: [u8; 3] = [255, 0, 0];
pub const FN_COLOR: [u8; 3] = [0, 0, 255];

/// Per-pixel RGB: TP green, TN black, FP red, FN blue.
pub fn render_confusion_map(mask: &[bool], reference: &[bool]) -> Result<Vec<[u8; 3]>> {
    contract!(
        mask.len() == reference.len(),
        "mask has {} pixels, reference has {}",
        mask.len(),
        reference.len()
    );
    Ok(mask
        .iter()
        .zip(reference)
        .map(|(&m, &r)| match (m, r) {
            (true, true) => TP_COLOR,
            (false, false) => TN_COLOR,
            (true, false) => FP_COLOR,
            (false, true) => FN_COLOR,
        })
        .collect())
}
