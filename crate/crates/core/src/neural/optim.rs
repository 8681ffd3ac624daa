//! AdamW with decoupled weight decay:
//!
//! ```text
//! m = b1 m + (1 - b1) g
//! v = b2 v + (1 - b2) g^2
//! theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta
//! ```
//!
//! with bias-corrected `m_hat = m / (1 - b1^t)`, `v_hat = v / (1 - b2^t)`.
//! Decay applies to every parameter tensor.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::layers::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of all `params` from their accumulated gradients. The
    /// parameter list must be in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|theta, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *theta -= lr * m_hat / (v_hat.sqrt() + epsilon) + lr * weight_decay * *theta;
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn param(values: Array2<f64>, grad: Array2<f64>) -> Param {
        let mut p = Param::new("p", values);
        p.grad = grad;
        p
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut p = param(array![[1.0, -2.0]], array![[0.0, 0.0]]);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        opt.step(&mut [&mut p], 1e-3);
        assert_eq!(p.value, array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_is_normalized_gradient() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let g = array![[0.5, -3.0, 1e-3]];
        let mut p = param(array![[1.0, 1.0, 1.0]], g.clone());
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let lr = 0.1;
        opt.step(&mut [&mut p], lr);
        for (theta, gi) in p.value.iter().zip(g.iter()) {
            let expected = 1.0 - lr * gi / (gi.abs() + 1e-8);
            assert!((theta - expected).abs() < 1e-12, "{theta} vs {expected}");
        }
    }

    #[test]
    fn zero_grad_with_decay_shrinks_multiplicatively() {
        let mut p = param(array![[2.0, -4.0]], array![[0.0, 0.0]]);
        let mut opt = AdamW::new(AdamWConfig::default());
        let lr = 0.5;
        opt.step(&mut [&mut p], lr);
        let shrink = 1.0 - lr * 0.01;
        assert!((p.value[[0, 0]] - 2.0 * shrink).abs() < 1e-15);
        assert!((p.value[[0, 1]] + 4.0 * shrink).abs() < 1e-15);
    }
}
