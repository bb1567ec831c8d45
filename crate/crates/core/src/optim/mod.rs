//! AdamW with decoupled weight decay, a warmup + cosine schedule, and a
//! finite-difference gradient checker.

mod grad_check;

pub use grad_check::{grad_check, GradCheckOptions, GradCheckReport, TensorCheck};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamStore, TensorGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    /// Apply decay to norms, biases, tokens and positional tables too.
    pub decay_all_tensors: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            base_lr: 3e-3,
            weight_decay: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: 1,
            warmup_steps: 0,
            decay_all_tensors: false,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr", "must be positive and finite"));
        }
        if !in_unit(self.beta1) {
            return Err(Error::config("beta1", "must lie in (0, 1)"));
        }
        if !in_unit(self.beta2) {
            return Err(Error::config("beta2", "must lie in (0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::config("eps", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::config("warmup_steps", "exceeds total_steps"));
        }
        Ok(())
    }
}

/// Moment accumulators in [`ParamStore::entries`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step: u64,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.data.len()]).collect();
        OptState { step: 0, first: zeros.clone(), second: zeros }
    }
}

/// One AdamW update at learning rate `lr`. Gradients are checked for
/// finiteness before anything is modified.
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut OptState,
    cfg: &AdamWConfig,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config("lr", format!("step learning rate must be positive, got {lr}")));
    }
    let g_entries = grads.entries();
    if g_entries.len() != state.first.len() {
        return Err(Error::data("optimizer state does not match parameter inventory"));
    }
    if let Some(e) = g_entries.iter().find(|e| e.data.iter().any(|v| !v.is_finite())) {
        return Err(Error::numeric(format!("non-finite gradient in tensor `{}`", e.name)));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in
        params.entries_mut().into_iter().zip(&g_entries).zip(state.first.iter_mut()).zip(state.second.iter_mut())
    {
        assert_eq!(p.name, g.name);
        let wd = if cfg.decay_all_tensors || p.group == TensorGroup::Decay { cfg.weight_decay } else { 0.0 };
        for (((theta, &gi), mi), vi) in p.data.iter_mut().zip(g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta -= lr * (m_hat / (v_hat.sqrt() + cfg.eps) + wd * *theta);
        }
    }
    Ok(())
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then half-cosine
/// decay to 0 at `total_steps`.
pub fn cosine_lr(step: u64, cfg: &AdamWConfig) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let decay = cfg.total_steps.saturating_sub(cfg.warmup_steps);
    if decay == 0 {
        return if step >= cfg.total_steps && step > cfg.warmup_steps { 0.0 } else { cfg.base_lr };
    }
    let progress = ((step - cfg.warmup_steps) as f64 / decay as f64).min(1.0);
    (0.5 * cfg.base_lr * (1.0 + (PI * progress).cos())).max(0.0)
}
