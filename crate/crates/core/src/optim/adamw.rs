//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub cfg: AdamWConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Real> AdamW<T> {
    pub fn new(n: usize, cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    /// One update of `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let (b1, b2) = (T::lit(self.cfg.beta1), T::lit(self.cfg.beta2));
        let lr = T::lit(self.cfg.lr);
        let eps = T::lit(self.cfg.eps);
        let decay = T::one() - lr * T::lit(self.cfg.weight_decay);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = params[i] * decay - lr * mh / (vh.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = AdamW::new(2, AdamWConfig { weight_decay: 0.0, ..Default::default() });
        let mut p = vec![1.0f64, -1.0];
        opt.step(&mut p, &[3.0, -0.2]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn decay_is_decoupled() {
        let mut opt = AdamW::new(1, AdamWConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() });
        let mut p = vec![2.0f64];
        opt.step(&mut p, &[0.0]);
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::new(1, AdamWConfig { lr: 0.05, weight_decay: 0.0, ..Default::default() });
        let mut p = vec![5.0f64];
        for _ in 0..2000 {
            let g = 2.0 * (p[0] - 1.5);
            opt.step(&mut p, &[g]);
        }
        assert!((p[0] - 1.5).abs() < 1e-3);
    }
}
