use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                config.learning_rate
            )));
        }
        Ok(AdamState {
            config,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        })
    }

    pub fn for_model(config: AdamConfig, model: &MlpModel) -> Result<Self> {
        AdamState::new(config, &model.param_shapes())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::shape(
                "AdamState::step (blocks)",
                self.first.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape(
                    "AdamState::step (block length)",
                    m.len(),
                    format!("{} params / {} grads", p.len(), g.len()),
                ));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step_model(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        let g = grads.as_slices();
        let mut p = model.params_mut();
        self.step(&mut p, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut params = [vec![0.5, -1.0, 2.0]];
        let grads = [vec![1.0; 3]];
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(1e-3), &[3]).unwrap();
        let before = params[0].clone();
        {
            let mut p: Vec<&mut [f64]> = params.iter_mut().map(|v| v.as_mut_slice()).collect();
            let g: Vec<&[f64]> = grads.iter().map(|v| v.as_slice()).collect();
            adam.step(&mut p, &g).unwrap();
        }
        for (a, b) in params[0].iter().zip(&before) {
            assert!((b - a - 1e-3).abs() < 1e-10);
        }
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = vec![0.3, 0.7];
        let mut adam = AdamState::new(AdamConfig::default(), &[2]).unwrap();
        adam.step(&mut [params.as_mut_slice()], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(params, vec![0.3, 0.7]);
    }

    #[test]
    fn three_constant_steps_match_scalar_reference() {
        // independent scalar recurrence
        let (lr, b1, b2, eps, g) = (1e-5, 0.9_f64, 0.999_f64, 1e-8, 0.5);
        let (mut x, mut m, mut v) = (1.0_f64, 0.0_f64, 0.0_f64);
        for t in 1..=3 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        let mut p = vec![1.0];
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(lr), &[1]).unwrap();
        for _ in 0..3 {
            adam.step(&mut [p.as_mut_slice()], &[&[g]]).unwrap();
        }
        assert!((p[0] - x).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut adam = AdamState::new(AdamConfig::default(), &[2]).unwrap();
        let mut p = vec![0.0; 3];
        assert!(adam.step(&mut [p.as_mut_slice()], &[&[0.0; 3]]).is_err());
        assert!(AdamState::new(AdamConfig::with_learning_rate(0.0), &[1]).is_err());
    }

    proptest! {
        #[test]
        fn zero_betas_give_sign_scaled_sgd(
            g in prop::collection::vec(-10.0f64..10.0, 1..8),
            lr in 1e-4f64..1.0,
        ) {
            let cfg = AdamConfig { learning_rate: lr, beta1: 0.0, beta2: 0.0, eps: 1e-8 };
            let mut adam = AdamState::new(cfg, &[g.len()]).unwrap();
            let mut p = vec![0.0; g.len()];
            adam.step(&mut [p.as_mut_slice()], &[g.as_slice()]).unwrap();
            for (pk, gk) in p.iter().zip(&g) {
                let expected = -lr * gk / (gk.abs() + 1e-8);
                prop_assert!((pk - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
            }
        }
    }
}
