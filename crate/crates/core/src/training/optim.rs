use serde::{Deserialize, Serialize};

use crate::model::{Grads, WeightStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Scales `grads` in place so that their global L2 norm is at most
/// `max_norm`, returning the factor applied.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        grads.scale(k);
        k
    } else {
        1.0
    }
}

/// AdamW state: first and second moments per parameter tensor and the step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, weights: &WeightStore) -> Self {
        let zeros: Vec<Vec<f64>> = weights.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update of the tensors in `ids` at learning rate `lr`. Weight decay
    /// is decoupled: `w ← w·(1 − lr·wd) − lr·m̂/(√v̂ + eps)`.
    pub fn step(&mut self, weights: &mut WeightStore, grads: &Grads, lr: f64, ids: &[usize]) {
        self.t += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let t = self.t as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for &id in ids {
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            for (i, w) in weights.data_mut(id).iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let step = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                *w = *w * (1.0 - lr * weight_decay) - lr * step;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> WeightStore {
        let mut ws = WeightStore::new();
        ws.push("w", vec![vals.len()], vals.to_vec()).unwrap();
        ws
    }

    #[test]
    fn clipping() {
        let ws = store(&[0.0, 0.0]);
        let mut g = Grads::zeros_like(&ws);
        g.get_mut(0).copy_from_slice(&[6.0, 8.0]);
        assert_eq!(clip_grad_norm(&mut g, 5.0), 0.5);
        assert!((g.global_norm() - 5.0).abs() < 1e-6);

        g.get_mut(0).copy_from_slice(&[0.6, 0.8]);
        assert_eq!(clip_grad_norm(&mut g, 5.0), 1.0);
        assert_eq!(g.get(0), &[0.6, 0.8]);

        g.clear();
        assert_eq!(clip_grad_norm(&mut g, 5.0), 1.0);
        assert!(g.get(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut ws = store(&[0.3, -1.2]);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &ws);
        let g = Grads::zeros_like(&ws);
        for _ in 0..10 {
            opt.step(&mut ws, &g, 0.1, &[0]);
        }
        assert_eq!(ws.data(0), &[0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ws = store(&[0.0]);
        let mut opt = AdamW::new(AdamWConfig::default(), &ws);
        let mut g = Grads::zeros_like(&ws);
        g.get_mut(0)[0] = 1.0;
        opt.step(&mut ws, &g, 0.1, &[0]);
        assert!((ws.data(0)[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn decay_alone_is_geometric() {
        let mut ws = store(&[2.0, -0.5]);
        let mut opt = AdamW::new(AdamWConfig::default(), &ws);
        let g = Grads::zeros_like(&ws);
        let (lr, k): (f64, f64) = (0.05, 1.0 - 0.05 * 0.01);
        for n in 1..=20 {
            opt.step(&mut ws, &g, lr, &[0]);
            assert!((ws.data(0)[0] - 2.0 * k.powi(n)).abs() < 1e-12);
            assert!((ws.data(0)[1] + 0.5 * k.powi(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn only_listed_tensors_change() {
        let mut ws = store(&[1.0]);
        ws.push("u", vec![1], vec![1.0]).unwrap();
        let mut opt = AdamW::new(AdamWConfig::default(), &ws);
        let mut g = Grads::zeros_like(&ws);
        g.get_mut(1)[0] = 1.0;
        opt.step(&mut ws, &g, 0.1, &[0]);
        assert_eq!(ws.data(1), &[1.0]);
        assert!(ws.data(0)[0] < 1.0);
    }
}
