//! First-order update rules shared by every trainer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive moment estimation with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub const fn adam() -> Self {
        OptimizerConfig::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, learning_rate: f64, n_params: usize) -> Self {
        let moments = match config {
            OptimizerConfig::Sgd => 0,
            OptimizerConfig::Adam { .. } => n_params,
        };
        Optimizer { config, learning_rate, first: vec![0.0; moments], second: vec![0.0; moments], steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update in place. Panics if lengths disagree.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length mismatch");
        self.steps += 1;
        let lr = self.learning_rate;
        match self.config {
            OptimizerConfig::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    apply(p, lr * g);
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                assert_eq!(self.first.len(), params.len(), "optimizer sized for a different parameter count");
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    apply(&mut params[i], lr * m_hat / (v_hat.sqrt() + eps));
                }
            }
        }
    }
}

/// Skips zero deltas so that `-0.0` parameters keep their sign bit.
fn apply(p: &mut f64, delta: f64) {
    if delta != 0.0 {
        *p -= delta;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut p = vec![1.0, -2.0];
        Optimizer::new(OptimizerConfig::Sgd, 0.5, 2).step(&mut p, &[2.0, -4.0]);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = vec![0.0, 0.0];
        Optimizer::new(OptimizerConfig::adam(), 0.1, 2).step(&mut p, &[3.0, -0.01]);
        assert!((p[0] + 0.1).abs() < 1e-6);
        assert!((p[1] - 0.1).abs() < 1e-4);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        for cfg in [OptimizerConfig::Sgd, OptimizerConfig::adam()] {
            let init = vec![0.3, -0.0, 7.0];
            let mut p = init.clone();
            let mut opt = Optimizer::new(cfg, 0.0, 3);
            for _ in 0..5 {
                opt.step(&mut p, &[1.0, -2.0, 0.5]);
            }
            assert!(p.iter().zip(&init).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = vec![5.0];
        let mut opt = Optimizer::new(OptimizerConfig::adam(), 0.1, 1);
        for _ in 0..500 {
            let g = vec![2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
