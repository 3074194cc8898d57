use super::{Real, Tensor};
use crate::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam over one ordered group of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T = f32> {
    config: AdamConfig,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        Self {
            config,
            first_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            second_moment: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.first_moment[i]
    }

    pub fn second_moment(&self, i: usize) -> &[T] {
        &self.second_moment[i]
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        contract!(
            params.len() == self.first_moment.len() && grads.len() == params.len(),
            "adam: {} params and {} grads for a group of {}",
            params.len(),
            grads.len(),
            self.first_moment.len()
        );
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            contract!(
                p.shape() == g.shape() && p.numel() == self.first_moment[i].len(),
                "adam: parameter {i} shape {:?} vs gradient {:?}",
                p.shape(),
                g.shape()
            );
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
        let (c1, c2) = (T::from_f64_lossy(correction1), T::from_f64_lossy(correction2));
        let (lr, eps) = (T::from_f64_lossy(learning_rate), T::from_f64_lossy(epsilon));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = b1 * *mv + (T::one() - b1) * gv;
                *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Vec<Tensor<f64>> {
        vec![Tensor::new(vec![1], vec![v]).unwrap()]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![Tensor::<f32>::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap()];
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &[Tensor::zeros(&[3])]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = v_hat = g^2 = 1 on the first step, so the update is lr / (1 + eps).
        let mut p = scalar_param(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &scalar_param(1.0)).unwrap();
        let expected = 1.0 - 1e-5 / (1.0 + 1e-8);
        assert!((p[0].data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = scalar_param(0.0);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            &p,
        );
        let mut last = 0.0;
        for step in 1..=50 {
            adam.step(&mut p, &scalar_param(-0.3)).unwrap();
            let now = p[0].data()[0];
            assert!(now > last, "step {step}: {now} <= {last}");
            last = now;
        }
        assert_eq!(adam.steps(), 50);
        assert!(adam.second_moment(0)[0] >= 0.0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar_param(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let bad = vec![Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()];
        assert!(adam.step(&mut p, &bad).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
    }
}
