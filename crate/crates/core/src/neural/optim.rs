use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;

/// Piecewise-constant learning rate: `initial` until the first milestone,
/// then the rate of the latest milestone whose (1-based) epoch has been reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { initial: lr, milestones: Vec::new() }
    }

    /// 1e-4, dropping to 1e-5, 5e-6, 1e-6, 5e-7 at epochs 6, 8, 10, 12.
    pub fn paper() -> Self {
        Self { initial: 1e-4, milestones: alloc::vec![(6, 1e-5), (8, 5e-6), (10, 1e-6), (12, 5e-7)] }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .max_by_key(|(e, _)| *e)
            .map_or(self.initial, |(_, lr)| *lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected ADAM update using the accumulated gradients, which are
/// cleared afterwards. `t` is the 1-based step count.
pub fn adam_step(store: &mut ParamStore, lr: f64, cfg: AdamConfig, t: u64) {
    let t = t.max(1) as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for i in 0..store.len() {
        let p = &mut store.params_mut()[i];
        let g = p.grad.as_slice();
        let m = p.first_moment.as_mut_slice();
        for (mk, gk) in m.iter_mut().zip(g) {
            *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * gk;
        }
        let v = p.second_moment.as_mut_slice();
        for (vk, gk) in v.iter_mut().zip(g) {
            *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * gk * gk;
        }
        let (m, v) = (p.first_moment.as_slice(), p.second_moment.as_slice());
        let w = p.value.as_mut_slice();
        for ((wk, mk), vk) in w.iter_mut().zip(m).zip(v) {
            let m_hat = mk / c1;
            let v_hat = vk / c2;
            *wk -= lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
        }
    }
    store.zero_grad();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn schedule_steps_at_reported_epochs() {
        let s = LrSchedule::paper();
        assert_eq!(s.lr_at(1), 1e-4);
        assert_eq!(s.lr_at(5), 1e-4);
        assert_eq!(s.lr_at(6), 1e-5);
        assert_eq!(s.lr_at(7), 1e-5);
        assert_eq!(s.lr_at(8), 5e-6);
        assert_eq!(s.lr_at(10), 1e-6);
        assert_eq!(s.lr_at(12), 5e-7);
        assert_eq!(s.lr_at(20), 5e-7);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::filled(1, 1, 3.0));
        store.params_mut()[0].grad = Tensor::filled(1, 1, 1.0);
        adam_step(&mut store, 1e-3, AdamConfig::default(), 1);
        let moved = 3.0 - store.value(id)[(0, 0)];
        assert!((moved - 1e-3).abs() < 1e-10, "moved {moved}");
        assert_eq!(store.param(id).grad[(0, 0)], 0.0);
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::filled(1, 1, 3.0));
        for t in 1..=3000 {
            let w = store.value(id)[(0, 0)];
            store.params_mut()[0].grad = Tensor::filled(1, 1, 2.0 * w);
            adam_step(&mut store, 1e-2, AdamConfig::default(), t);
        }
        assert!(store.value(id)[(0, 0)].abs() < 1e-3);
    }
}
