use super::{push_conv, ParamSet};
use crate::augment::SeededRng;
use crate::tensor::{Real, Tape, Tensor, Var};
use crate::{contract, Result};

/// Scale of the head convolution's init bound; keeps the untrained map near 0.5.
const HEAD_INIT_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DcpgConfig {
    /// Number of residual blocks.
    pub blocks: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub input_channels: usize,
    pub seed: u64,
}

impl Default for DcpgConfig {
    fn default() -> Self {
        Self {
            blocks: 32,
            channels: 32,
            kernel_size: 3,
            input_channels: 1,
            seed: 0,
        }
    }
}

impl DcpgConfig {
    pub fn validate(&self) -> Result<()> {
        contract!(self.blocks >= 1, "generator needs at least one residual block");
        contract!(self.channels >= 1, "generator needs at least one channel");
        contract!(
            self.kernel_size % 2 == 1,
            "generator kernel size {} must be odd",
            self.kernel_size
        );
        contract!(self.input_channels >= 1, "generator needs an input channel");
        Ok(())
    }

    /// Side length of the input window that can influence one output pixel.
    pub fn receptive_field(&self) -> usize {
        (2 * self.blocks + 2) * (self.kernel_size - 1) + 1
    }
}

/// Residual change-probability generator mapping the difference image to
/// per-pixel change probabilities.
///
/// Topology: 3x3 stem conv (`1 -> C`), `N` pre-activation residual blocks
/// (`x + conv(relu(conv(relu(x))))`), then `sigmoid(conv(relu(x)))` with a
/// `C -> 1` head. All convolutions are stride 1 with same padding.
#[derive(Clone, Debug, PartialEq)]
pub struct DcpgNetwork<T: Real = f32> {
    config: DcpgConfig,
    params: ParamSet<T>,
}

impl<T: Real> DcpgNetwork<T> {
    /// Fan-in scaled uniform init from the seeded generator. The second conv
    /// of every residual branch is further scaled by `1 / sqrt(N)` so the
    /// activation variance stays bounded at depth.
    pub fn new(config: DcpgConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(config.seed);
        let mut params = ParamSet::new();
        let (c, k) = (config.channels, config.kernel_size);
        push_conv(&mut params, &mut rng, "stem", config.input_channels, c, k, 1.0);
        let branch_scale = 1.0 / (config.blocks as f64).sqrt();
        for b in 0..config.blocks {
            push_conv(&mut params, &mut rng, &format!("block{b}.conv1"), c, c, k, 1.0);
            push_conv(&mut params, &mut rng, &format!("block{b}.conv2"), c, c, k, branch_scale);
        }
        push_conv(&mut params, &mut rng, "head", c, 1, k, HEAD_INIT_SCALE);
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &DcpgConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params.bind(tape, trainable)
    }

    /// `P_c = f(I_d)` for a `1 x 1 x h x w` difference image already on `tape`.
    pub fn forward(&self, tape: &mut Tape<T>, vars: &[Var], input: Var) -> Result<Var> {
        contract!(
            vars.len() == self.params.len(),
            "generator expects {} bound parameters, got {}",
            self.params.len(),
            vars.len()
        );
        contract!(tape.value(input).is_finite(), "generator input contains non-finite values");
        let (_, c, _, _) = tape.value(input).dims4()?;
        contract!(
            c == self.config.input_channels,
            "generator expects {} input channels, got {c}",
            self.config.input_channels
        );
        let pad = self.config.kernel_size / 2;
        let mut x = tape.conv2d(input, vars[0], vars[1], 1, pad)?;
        for b in 0..self.config.blocks {
            let base = 2 + 4 * b;
            let r = tape.relu(x)?;
            let r = tape.conv2d(r, vars[base], vars[base + 1], 1, pad)?;
            let r = tape.relu(r)?;
            let r = tape.conv2d(r, vars[base + 2], vars[base + 3], 1, pad)?;
            x = tape.add(x, r)?;
        }
        let head = 2 + 4 * self.config.blocks;
        let x = tape.relu(x)?;
        let z = tape.conv2d(x, vars[head], vars[head + 1], 1, pad)?;
        tape.sigmoid(z)
    }

    /// Forward pass without recording gradients; returns the `1 x 1 x h x w` map.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let x = tape.constant(input.clone());
        let out = self.forward(&mut tape, &vars, x)?;
        Ok(tape.value(out).clone())
    }
}
