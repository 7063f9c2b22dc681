use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_norm_clip: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64, grad_norm_clip: f64) -> Self {
        AdamWConfig {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_norm_clip,
        }
    }
}

/// Rescales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        let s = max_norm / norm;
        for t in &mut grads.tensors {
            t.iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

/// AdamW moment state for one model.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamW {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Clips `grads`, decays the weights, then applies the Adam update.
    pub fn step(&mut self, params: &mut ModelParams, grads: &mut Gradients) {
        clip_grad_norm(grads, self.cfg.grad_norm_clip);
        self.step += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let decay = 1.0 - c.lr * c.weight_decay;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] = p[i] * decay - c.lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
    }
}

/// One AdamW update; see [`AdamW::step`].
pub fn adamw_step(params: &mut ModelParams, grads: &mut Gradients, state: &mut AdamW) {
    state.step(params, grads);
}
