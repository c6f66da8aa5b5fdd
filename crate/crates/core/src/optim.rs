use serde::{Deserialize, Serialize};

use crate::error::{GimcError, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// `lr0 · (1 - step / total)`.
pub fn lr_schedule(step: usize, total: usize, lr0: f64) -> Result<f64> {
    if total == 0 {
        return Err(GimcError::Config(
            "learning-rate schedule needs at least one step".into(),
        ));
    }
    let frac = step.min(total) as f64 / total as f64;
    Ok(lr0 * (1.0 - frac))
}

/// Decoupled weight decay Adam over every named tensor of the model.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: ModelParams,
    v: ModelParams,
    t: u64,
}

impl AdamW {
    pub fn new(params: &ModelParams, config: AdamWConfig) -> Self {
        AdamW {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`. Rejects non-finite gradients
    /// before touching any parameter.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        for (name, g) in grads.named() {
            if !g.is_finite() {
                return Err(GimcError::NonFinite(format!("gradient of {name}")));
            }
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let gs = grads.named();
        let ms = self.m.named_mut();
        let vs = self.v.named_mut();
        for (((_, p), (_, g)), ((_, m), (_, v))) in
            params.named_mut().into_iter().zip(gs).zip(ms.into_iter().zip(vs))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -= lr * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * p.data[i]);
            }
        }
        Ok(())
    }
}
