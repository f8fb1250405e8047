//! AdamW with decoupled weight decay, linear warmup, and global-norm
//! gradient clipping.

use serde::{Deserialize, Serialize};

use super::params::Params;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied only to entries flagged `decay`.
    pub weight_decay: f64,
    /// Global-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
            grad_clip: Some(1.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    /// Number of optimizer steps taken (for bias correction).
    pub t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW { cfg, t: 0 }
    }

    /// One update using the gradients currently stored in `params`.
    /// Gradients are left untouched; callers zero them per step.
    pub fn step(&mut self, params: &mut Params, lr: f64) {
        if let Some(clip) = self.cfg.grad_clip {
            let norm_sq: f64 = params.entries().iter().map(|e| e.grad.frobenius_sq()).sum();
            let norm = norm_sq.sqrt();
            if norm > clip {
                let scale = clip / norm;
                for e in params.entries_mut() {
                    e.grad.scale_assign(scale);
                }
            }
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        for e in params.entries_mut() {
            let decay = if e.decay { self.cfg.weight_decay } else { 0.0 };
            for i in 0..e.value.data.len() {
                let g = e.grad.data[i];
                e.m.data[i] = self.cfg.beta1 * e.m.data[i] + (1.0 - self.cfg.beta1) * g;
                e.v.data[i] = self.cfg.beta2 * e.v.data[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = e.m.data[i] / bc1;
                let v_hat = e.v.data[i] / bc2;
                e.value.data[i] -=
                    lr * (m_hat / (v_hat.sqrt() + self.cfg.eps) + decay * e.value.data[i]);
            }
        }
    }
}

/// Linear warmup from 0 to `base` over `warmup` steps, then constant.
pub fn warmup_lr(base: f64, warmup: u64, step: u64) -> f64 {
    if warmup == 0 {
        base
    } else {
        base * ((step + 1) as f64 / warmup as f64).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mat::Mat;

    #[test]
    fn zero_grad_fresh_state_moves_nothing_without_decay() {
        let mut params = Params::new();
        let id = params.add("w", Mat::from_vec(1, 2, vec![0.3, -0.7]), true);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() });
        opt.step(&mut params, 1e-3);
        assert_eq!(params.value(id).data, vec![0.3, -0.7]);
    }

    #[test]
    fn descends_a_quadratic() {
        // f(w) = (w - 2)^2, df/dw = 2(w - 2)
        let mut params = Params::new();
        let id = params.add("w", Mat::scalar(10.0), false);
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, grad_clip: None, ..Default::default() });
        for _ in 0..4000 {
            let w = params.value(id).data[0];
            params.grad_mut(id).data[0] = 2.0 * (w - 2.0);
            opt.step(&mut params, 0.01);
            params.zero_grads();
        }
        assert!((params.value(id).data[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut params = Params::new();
        let id = params.add("w", Mat::from_vec(1, 2, vec![0.0, 0.0]), false);
        let mut opt = AdamW::new(AdamWConfig { grad_clip: Some(1.0), weight_decay: 0.0, ..Default::default() });
        params.grad_mut(id).data.copy_from_slice(&[30.0, 40.0]);
        opt.step(&mut params, 1.0);
        // Norm-50 gradient clipped in place down to norm 1.
        let g = params.grad(id).data.clone();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        let v = params.value(id).data.clone();
        assert!(v[0] < 0.0 && v[1] < 0.0);
    }

    #[test]
    fn warmup_ramps_linearly() {
        assert!((warmup_lr(1.0, 10, 0) - 0.1).abs() < 1e-12);
        assert!((warmup_lr(1.0, 10, 4) - 0.5).abs() < 1e-12);
        assert_eq!(warmup_lr(1.0, 10, 9), 1.0);
        assert_eq!(warmup_lr(1.0, 10, 50), 1.0);
        assert_eq!(warmup_lr(1.0, 0, 0), 1.0);
    }
}
