//! Adam with decoupled weight decay, stepped per parameter group.
//!
//! Each group (encoder, decoder, style MLP, discriminator) owns its own
//! step counter so bias correction stays correct when a group sits out
//! some iterations — the decoder does exactly that whenever the schedule
//! gives it no reconstruction gradient.

use serde::{Deserialize, Serialize};

use super::store::{ParamGroup, ParamStore};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub group: ParamGroup,
    pub step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, group: ParamGroup) -> Self {
        Self {
            config,
            group,
            step_count: 0,
        }
    }

    /// One update over every parameter in this optimizer's group.
    pub fn step(&mut self, store: &mut ParamStore, lr: f32) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let c = self.config;
        let bc1 = 1.0 - (c.beta1 as f64).powf(t);
        let bc2 = 1.0 - (c.beta2 as f64).powf(t);
        for (_, p) in store.iter_mut() {
            if p.group != self.group {
                continue;
            }
            let n = p.value.numel();
            for i in 0..n {
                let g = p.grad.data()[i];
                let m = c.beta1 * p.adam_m.data()[i] + (1.0 - c.beta1) * g;
                let v = c.beta2 * p.adam_v.data()[i] + (1.0 - c.beta2) * g * g;
                p.adam_m.data_mut()[i] = m;
                p.adam_v.data_mut()[i] = v;
                let m_hat = m as f64 / bc1;
                let v_hat = v as f64 / bc2;
                let w = p.value.data()[i];
                let decayed = w - lr * c.weight_decay * w;
                p.value.data_mut()[i] =
                    decayed - (lr as f64 * m_hat / (v_hat.sqrt() + c.eps as f64)) as f32;
            }
        }
    }
}
