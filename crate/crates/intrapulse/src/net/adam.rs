//! Adam: adaptive moment estimation with bias correction.

use crate::net::model::{FusionNet, Grads};
use crate::net::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter tensor plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &FusionNet, cfg: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = model
            .params()
            .iter()
            .map(|(_, p)| Tensor::zeros(p.shape()))
            .collect();
        AdamState {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, model: &mut FusionNet, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for ((mt, vt), ((_, param), grad)) in self
            .m
            .iter_mut()
            .zip(self.v.iter_mut())
            .zip(model.params_mut().into_iter().zip(&grads.tensors))
        {
            debug_assert_eq!(mt.shape(), param.shape());
            let m = mt.as_mut_slice();
            let v = vt.as_mut_slice();
            let p = param.as_mut_slice();
            let g = grad.as_slice();
            for i in 0..p.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::model::BranchMode;

    fn snapshot(model: &FusionNet) -> Vec<Vec<f64>> {
        model
            .params()
            .iter()
            .map(|(_, t)| t.as_slice().to_vec())
            .collect()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = FusionNet::new(5, 256, 32, BranchMode::Fused, 1).unwrap();
        let before = snapshot(&model);
        let grads = model.zero_grads();
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &grads);
        assert_eq!(snapshot(&model), before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_with_constant_gradient_moves_by_lr() {
        // Bias-corrected ratio m_hat/sqrt(v_hat) is 1 on step one, so the
        // update magnitude is lr (up to eps) regardless of gradient size.
        let mut model = FusionNet::new(5, 256, 32, BranchMode::Fused, 2).unwrap();
        let before = snapshot(&model);
        let mut grads = model.zero_grads();
        for t in &mut grads.tensors {
            t.fill(0.37);
        }
        let cfg = AdamConfig::default();
        let lr = cfg.lr;
        let mut adam = AdamState::new(&model, cfg);
        adam.step(&mut model, &grads);
        for (b, (_, t)) in before.iter().zip(model.params()) {
            for (x0, x1) in b.iter().zip(t.as_slice()) {
                let delta = x0 - x1;
                assert!((delta - lr).abs() < 1e-6 * lr, "delta {delta}");
            }
        }
    }

    #[test]
    fn identical_runs_take_identical_trajectories() {
        let run = || {
            let mut model = FusionNet::new(5, 256, 32, BranchMode::Fused, 3).unwrap();
            let mut grads = model.zero_grads();
            let mut adam = AdamState::new(&model, AdamConfig::default());
            for step in 0..5 {
                for t in &mut grads.tensors {
                    let s = t.as_mut_slice();
                    for (i, v) in s.iter_mut().enumerate() {
                        *v = ((i + step) % 7) as f64 * 0.01 - 0.02;
                    }
                }
                adam.step(&mut model, &grads);
            }
            snapshot(&model)
        };
        assert_eq!(run(), run());
    }
}
