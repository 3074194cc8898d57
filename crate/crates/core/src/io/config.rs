//! `key=value` configuration mirroring [`EngineConfig`].
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//! `iterations`, `learningRate`, `threshold`, `seed`, `bands` (`i,j,k`),
//! `loss.alphaImg`, `loss.alphaFeat` (comma list), `loss.enableImg`,
//! `loss.enableFeat`, `loss.enableCtx`, `loss.enableSparse`,
//! `loss.ctxNormalization` (`mean`|`sum`), `loss.ctxStopGradient`,
//! `dcpg.blocks`, `dcpg.channels`, `dfe.layers`, `dfe.trainable`,
//! `dfe.normalizeInput`, `dfe.strictWeights`, `augment.brightness`,
//! `augment.contrast`, `augment.saturation`, `augment.hue` (`lo,hi`),
//! `augment.noiseSigma`, `pcc.enabled`, `pcc.kernel`
//! (`identity`|`poly2`|`root2`), `pcc.beta` (count or `auto`).

use std::path::Path;

use crate::engine::EngineConfig;
use crate::{Error, Result};

fn bad(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("{key}={value}: expected {expected}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| bad(key, value, "a non-negative integer"))
}

fn parse_real(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| bad(key, value, "a finite number"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse_real(key, v.trim())).collect()
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64)> {
    match parse_list(key, value)?[..] {
        [lo, hi] => Ok((lo, hi)),
        _ => Err(bad(key, value, "two comma-separated numbers lo,hi")),
    }
}

/// Parses `i,j,k`.
pub fn parse_band_mapping(value: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| bad("bands", value, "three band indices i,j,k")))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| bad("bands", value, "three band indices i,j,k"))
}

/// Sets one key. Changing `dfe.layers` resets `loss.alphaFeat` to all ones
/// when the lengths no longer agree.
pub fn set_config_value(config: &mut EngineConfig, key: &str, value: &str) -> Result<()> {
    let value = value.trim();
    let w = &mut config.loss_weights;
    match key {
        "iterations" => config.iterations = parse_count(key, value)?,
        "learningRate" => config.learning_rate = parse_real(key, value)?,
        "threshold" => config.threshold = parse_real(key, value)?,
        "seed" => config.seed = value.parse().map_err(|_| bad(key, value, "an unsigned 64-bit integer"))?,
        "bands" => config.band_mapping = Some(parse_band_mapping(value)?),
        "loss.alphaImg" => w.alpha_img = parse_real(key, value)?,
        "loss.alphaFeat" => w.alpha_feat = parse_list(key, value)?,
        "loss.enableImg" => w.enable_img = parse_bool(key, value)?,
        "loss.enableFeat" => w.enable_feat = parse_bool(key, value)?,
        "loss.enableCtx" => w.enable_ctx = parse_bool(key, value)?,
        "loss.enableSparse" => w.enable_sparse = parse_bool(key, value)?,
        "loss.ctxNormalization" => config.ctx_normalization = value.parse()?,
        "loss.ctxStopGradient" => config.ctx_stop_gradient = parse_bool(key, value)?,
        "dcpg.blocks" => config.dcpg_blocks = parse_count(key, value)?,
        "dcpg.channels" => config.dcpg_channels = parse_count(key, value)?,
        "dfe.layers" => {
            config.dfe_layers = parse_count(key, value)?;
            if config.loss_weights.alpha_feat.len() != config.dfe_layers {
                config.loss_weights.alpha_feat = vec![1.0; config.dfe_layers];
            }
        }
        "dfe.trainable" => config.dfe_trainable = parse_bool(key, value)?,
        "dfe.normalizeInput" => config.dfe_normalize_input = parse_bool(key, value)?,
        "dfe.strictWeights" => config.strict_weights = parse_bool(key, value)?,
        "augment.brightness" => config.augmentation.brightness = parse_range(key, value)?,
        "augment.contrast" => config.augmentation.contrast = parse_range(key, value)?,
        "augment.saturation" => config.augmentation.saturation = parse_range(key, value)?,
        "augment.hue" => config.augmentation.hue = parse_range(key, value)?,
        "augment.noiseSigma" => config.augmentation.noise_sigma = parse_real(key, value)?,
        "pcc.enabled" => config.pcc_enabled = parse_bool(key, value)?,
        "pcc.kernel" => config.pcc_kernel = value.parse()?,
        "pcc.beta" => {
            config.pcc_beta = match value {
                "auto" => None,
                v => Some(parse_count(key, v)?),
            }
        }
        _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
    }
    Ok(())
}

/// Applies every `key=value` line of `text` in order.
pub fn apply_config_text(config: &mut EngineConfig, text: &str) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        set_config_value(config, key.trim(), value)?;
    }
    Ok(())
}

pub fn load_config_file(path: &Path, config: &mut EngineConfig) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    apply_config_text(config, &text)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// Every key with its current value, in documentation order.
pub fn config_entries(config: &EngineConfig) -> Vec<(String, String)> {
    let w = &config.loss_weights;
    let a = &config.augmentation;
    let range = |r: (f64, f64)| join(&[r.0, r.1]);
    let entries: Vec<(&str, String)> = vec![
        ("iterations", config.iterations.to_string()),
        ("learningRate", config.learning_rate.to_string()),
        ("threshold", config.threshold.to_string()),
        ("seed", config.seed.to_string()),
        (
            "bands",
            match config.band_mapping {
                Some([i, j, k]) => format!("{i},{j},{k}"),
                None => "0,1,2".into(),
            },
        ),
        ("loss.alphaImg", w.alpha_img.to_string()),
        ("loss.alphaFeat", join(&w.alpha_feat)),
        ("loss.enableImg", w.enable_img.to_string()),
        ("loss.enableFeat", w.enable_feat.to_string()),
        ("loss.enableCtx", w.enable_ctx.to_string()),
        ("loss.enableSparse", w.enable_sparse.to_string()),
        ("loss.ctxNormalization", config.ctx_normalization.name().into()),
        ("loss.ctxStopGradient", config.ctx_stop_gradient.to_string()),
        ("dcpg.blocks", config.dcpg_blocks.to_string()),
        ("dcpg.channels", config.dcpg_channels.to_string()),
        ("dfe.layers", config.dfe_layers.to_string()),
        ("dfe.trainable", config.dfe_trainable.to_string()),
        ("dfe.normalizeInput", config.dfe_normalize_input.to_string()),
        ("dfe.strictWeights", config.strict_weights.to_string()),
        ("augment.brightness", range(a.brightness)),
        ("augment.contrast", range(a.contrast)),
        ("augment.saturation", range(a.saturation)),
        ("augment.hue", range(a.hue)),
        ("augment.noiseSigma", a.noise_sigma.to_string()),
        ("pcc.enabled", config.pcc_enabled.to_string()),
        ("pcc.kernel", config.pcc_kernel.name().into()),
        (
            "pcc.beta",
            config.pcc_beta.map_or_else(|| "auto".to_string(), |b| b.to_string()),
        ),
    ];
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::CtxNormalization;
    use crate::preprocess::KernelKind;

    #[test]
    fn entries_round_trip() {
        let mut c = EngineConfig::default();
        apply_config_text(
            &mut c,
            "# custom\niterations = 12\nlearningRate=3e-4\nbands=3,2,1\nloss.enableCtx=false\n\
             loss.ctxNormalization=sum\ndfe.layers=3\naugment.hue=-0.1,0.2\npcc.kernel=poly2\npcc.beta=4\nseed=18446744073709551615\n",
        )
        .unwrap();
        assert_eq!(c.iterations, 12);
        assert_eq!(c.band_mapping, Some([3, 2, 1]));
        assert_eq!(c.loss_weights.alpha_feat, vec![1.0; 3]);
        assert_eq!(c.ctx_normalization, CtxNormalization::Sum);
        assert_eq!(c.pcc_kernel, KernelKind::Poly2);
        assert_eq!(c.seed, u64::MAX);
        let text: String = config_entries(&c).iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let mut d = EngineConfig::default();
        apply_config_text(&mut d, &text).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = EngineConfig::default();
        for line in ["iterations=-1", "threshold=abc", "bands=1,2", "nope=1", "loss.enableImg=maybe", "novalue"] {
            let err = apply_config_text(&mut c, line).unwrap_err().to_string();
            assert!(err.contains(line.split('=').next().unwrap()), "{err}");
        }
    }
}
