//! Adam optimizer with bias correction.

use super::store::{ParamId, ParamStore};
use super::tensor::Tensor;
use super::NumericError;

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// Optimizer state over a fixed set of parameters. Restricting the set is
/// how bootstrap trains new heads while leaving everything else untouched.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    slots: Vec<(ParamId, Tensor, Tensor)>, // (param, first moment, second moment)
}

impl Adam {
    /// Adam over every parameter currently in the store.
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        Self::for_params(cfg, store, &store.ids())
    }

    /// Adam over an explicit parameter subset.
    pub fn for_params(cfg: AdamConfig, store: &ParamStore, ids: &[ParamId]) -> Self {
        let slots = ids
            .iter()
            .map(|&id| {
                let shape = store.value(id).shape().to_vec();
                (id, Tensor::zeros(shape.clone()), Tensor::zeros(shape))
            })
            .collect();
        Adam { cfg, t: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update from the accumulated gradients; clears the gradients of
    /// the managed parameters afterward.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NumericError> {
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - self.cfg.beta1.powf(t);
        let c2 = 1.0 - self.cfg.beta2.powf(t);
        for (id, m, v) in &mut self.slots {
            let (grad, value) = store.grad_and_value_mut(*id);
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
            store.grad_mut(*id).data_mut().fill(0.0);
        }
        Ok(())
    }
}
