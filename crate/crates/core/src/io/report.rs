//! Plain-text run report: one `key=value` per line.
//!
//! ```text
//! config.<key>=<value>          echo of every configuration key
//! input.pre.sha256=<hex>        input checksums (also input.post, input.ref)
//! raster.height=<n>, raster.width=<n>
//! loss[t].img|feat|ctx|sparse|total=<real>   for t = 1..T
//! metrics.tp|tn|fp|fn=<n>, metrics.oa|ua|recall|f1|auc=<real>
//! timing.totalSeconds=<real>
//! ```
//!
//! Reals are written in scientific notation with 9 significant digits.

use super::config::config_entries;
use crate::engine::{EngineConfig, RunResult};
use crate::losses::LossBreakdown;
use crate::metrics::{confusion, roc_auc, scores, ConfusionCounts, Scores, DEFAULT_THRESHOLDS};
use crate::{contract, Error, Result};

/// `{:.8e}`: 9 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.8e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub scores: Scores,
    /// Absent when the reference holds a single class.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub config: Vec<(String, String)>,
    /// `(name, sha256)` per input file.
    pub checksums: Vec<(String, String)>,
    pub height: usize,
    pub width: usize,
    pub losses: Vec<LossBreakdown>,
    pub metrics: Option<MetricsReport>,
    pub total_seconds: f64,
}

fn real(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::Format(format!("report value {key}={value} is not a number")))
}

fn count(key: &str, value: &str) -> Result<u64> {
    value
        .parse::<u64>()
        .map_err(|_| Error::Format(format!("report value {key}={value} is not a count")))
}

impl MetricsReport {
    pub fn evaluate(pc: &[f32], mask: &[bool], reference: &[bool]) -> Result<Self> {
        let counts = confusion(mask, reference)?;
        let auc = match roc_auc(pc, reference, DEFAULT_THRESHOLDS) {
            Ok(curve) => Some(curve.auc),
            Err(Error::UndefinedAuc) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            scores: scores(&counts),
            counts,
            auc,
        })
    }
}

impl RunReport {
    pub fn from_run(
        config: &EngineConfig,
        result: &RunResult,
        reference: Option<&[bool]>,
        checksums: Vec<(String, String)>,
    ) -> Result<Self> {
        let metrics = match reference {
            Some(r) => {
                contract!(
                    r.len() == result.probability.len(),
                    "reference mask has {} pixels, the result has {}",
                    r.len(),
                    result.probability.len()
                );
                Some(MetricsReport::evaluate(&result.probability, &result.mask, r)?)
            }
            None => None,
        };
        Ok(Self {
            config: config_entries(config),
            checksums,
            height: result.height,
            width: result.width,
            losses: result.loss_history.clone(),
            metrics,
            total_seconds: result.seconds,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        for (k, v) in &self.config {
            line(&format!("config.{k}"), v.clone());
        }
        for (k, v) in &self.checksums {
            line(&format!("input.{k}.sha256"), v.clone());
        }
        line("raster.height", self.height.to_string());
        line("raster.width", self.width.to_string());
        for (i, b) in self.losses.iter().enumerate() {
            let t = i + 1;
            line(&format!("loss[{t}].img"), format_real(b.img));
            line(&format!("loss[{t}].feat"), format_real(b.feat));
            line(&format!("loss[{t}].ctx"), format_real(b.ctx));
            line(&format!("loss[{t}].sparse"), format_real(b.sparse));
            line(&format!("loss[{t}].total"), format_real(b.total));
        }
        if let Some(m) = &self.metrics {
            line("metrics.tp", m.counts.tp.to_string());
            line("metrics.tn", m.counts.tn.to_string());
            line("metrics.fp", m.counts.fp.to_string());
            line("metrics.fn", m.counts.fn_.to_string());
            line("metrics.oa", format_real(m.scores.oa));
            line("metrics.ua", format_real(m.scores.ua));
            line("metrics.recall", format_real(m.scores.recall));
            line("metrics.f1", format_real(m.scores.f1));
            if let Some(auc) = m.auc {
                line("metrics.auc", format_real(auc));
            }
        }
        line("timing.totalSeconds", format_real(self.total_seconds));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = RunReport::default();
        let mut counts = ConfusionCounts::default();
        let mut scores = Scores {
            oa: 0.0,
            ua: 0.0,
            recall: 0.0,
            f1: 0.0,
        };
        let (mut has_metrics, mut auc) = (false, None);
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("report line {line:?} is not key=value")))?;
            if let Some(k) = key.strip_prefix("config.") {
                r.config.push((k.to_string(), value.to_string()));
            } else if let Some(k) = key.strip_prefix("input.").and_then(|k| k.strip_suffix(".sha256")) {
                r.checksums.push((k.to_string(), value.to_string()));
            } else if let Some(rest) = key.strip_prefix("loss[") {
                let (t, field) = rest
                    .split_once("].")
                    .ok_or_else(|| Error::Format(format!("malformed loss key {key:?}")))?;
                let t = count(key, t)? as usize;
                if t == 0 || t > r.losses.len() + 1 {
                    return Err(Error::Format(format!("loss index {t} out of sequence")));
                }
                if t == r.losses.len() + 1 {
                    r.losses.push(LossBreakdown::default());
                }
                let b = &mut r.losses[t - 1];
                let v = real(key, value)?;
                match field {
                    "img" => b.img = v,
                    "feat" => b.feat = v,
                    "ctx" => b.ctx = v,
                    "sparse" => b.sparse = v,
                    "total" => b.total = v,
                    _ => return Err(Error::Format(format!("unknown loss field {field:?}"))),
                }
            } else if let Some(k) = key.strip_prefix("metrics.") {
                has_metrics = true;
                match k {
                    "tp" => counts.tp = count(key, value)?,
                    "tn" => counts.tn = count(key, value)?,
                    "fp" => counts.fp = count(key, value)?,
                    "fn" => counts.fn_ = count(key, value)?,
                    "oa" => scores.oa = real(key, value)?,
                    "ua" => scores.ua = real(key, value)?,
                    "recall" => scores.recall = real(key, value)?,
                    "f1" => scores.f1 = real(key, value)?,
                    "auc" => auc = Some(real(key, value)?),
                    _ => return Err(Error::Format(format!("unknown metrics key {key:?}"))),
                }
            } else {
                match key {
                    "raster.height" => r.height = count(key, value)? as usize,
                    "raster.width" => r.width = count(key, value)? as usize,
                    "timing.totalSeconds" => r.total_seconds = real(key, value)?,
                    _ => return Err(Error::Format(format!("unknown report key {key:?}"))),
                }
            }
        }
        if has_metrics {
            r.metrics = Some(MetricsReport { counts, scores, auc });
        }
        Ok(r)
    }

    /// Value of one key as written, for lookups by name.
    pub fn get(&self, key: &str) -> Option<String> {
        self.to_text()
            .lines()
            .find_map(|l| l.split_once('=').filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
    }
}
