use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Adaptive-moment hyperparameters with decoupled weight decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::new(1e-3, 1e-4)
    }
}

/// One update of `params` in place. `t` is the 1-based step number.
///
/// `m` and `v` hold the first and second moments and must match `params` in length.
pub fn adam_update(
    cfg: &AdamConfig,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= cfg.lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::config("lr", "learning rate must be positive"));
        }
        if !(config.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Ok(Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    /// Applies one step to every parameter; absent gradients count as zero.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for id in store.ids() {
            if let Some(g) = grads.get_raw(id) {
                if !g.is_finite() {
                    return Err(Error::Training {
                        param: store.name(id).to_string(),
                    });
                }
            }
        }
        self.step += 1;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads.get(id, store);
            let p = store.get_mut(id);
            adam_update(
                &self.config,
                self.step,
                p.data_mut(),
                g.data(),
                self.first[i].data_mut(),
                self.second[i].data_mut(),
            );
        }
        Ok(())
    }
}
