use serde::{Deserialize, Serialize};

use super::params::Model;
use super::transformer::loss_and_grad;
use crate::error::{Error, Result};
use crate::sampler::Batch;
use crate::util::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm threshold; 0 disables clipping.
    pub clip_norm: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            peak_lr: 1e-3,
            warmup_steps: 400,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            clip_norm: 1.0,
        }
    }
}

impl OptimConfig {
    /// Linear warmup to `peak_lr`, then inverse-square-root decay.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step == 0 {
            return 0.0;
        }
        let s = step as f64;
        let w = self.warmup_steps.max(1) as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: OptimConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl OptimizerState {
    pub fn new(config: OptimConfig, num_params: usize) -> OptimizerState {
        OptimizerState {
            config,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub tokens: usize,
    pub grad_norm: f64,
    pub lr: f64,
}

pub fn global_norm(g: &[f32]) -> f64 {
    g.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// One Adam update on `batch`. A non-finite loss or gradient leaves the
/// parameters and optimizer state untouched.
pub fn train_step(model: &mut Model<f32>, opt: &mut OptimizerState, batch: &Batch, rng: &mut Rng) -> Result<StepStats> {
    let (out, grad) = loss_and_grad(model, batch, Some(rng), true)?;
    let mut g = grad.expect("gradient requested");
    let norm = global_norm(&g);
    let step = opt.step + 1;
    if !out.loss.is_finite() || !norm.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("loss {} grad norm {}", out.loss, norm),
        });
    }
    let c = &opt.config;
    if c.clip_norm > 0.0 && norm > c.clip_norm {
        let s = (c.clip_norm / norm) as f32;
        g.iter_mut().for_each(|x| *x *= s);
    }
    let lr = c.lr_at(step);
    let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
    let bc1 = 1.0 - c.beta1.powi(step as i32);
    let bc2 = 1.0 - c.beta2.powi(step as i32);
    let step_size = (lr / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let eps = c.eps as f32;
    for (((p, &gi), m), v) in model.params.iter_mut().zip(&g).zip(opt.m.iter_mut()).zip(opt.v.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * gi;
        *v = b2 * *v + (1.0 - b2) * gi * gi;
        *p -= step_size * *m / (v.sqrt() / bc2_sqrt + eps);
    }
    opt.step = step;
    Ok(StepStats {
        loss: out.loss,
        tokens: out.tokens,
        grad_norm: norm,
        lr,
    })
}
