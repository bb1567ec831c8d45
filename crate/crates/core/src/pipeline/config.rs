use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeadSpec;
use crate::optim::AdamWConfig;

/// Pretraining reconstruction target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    Spatiotemporal,
    Fourier,
    InvFourier,
}

impl TargetMode {
    pub const ALL: [TargetMode; 3] = [TargetMode::Spatiotemporal, TargetMode::Fourier, TargetMode::InvFourier];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::Spatiotemporal => "spatiotemporal",
            TargetMode::Fourier => "fourier",
            TargetMode::InvFourier => "inv_fourier",
        }
    }

    /// Decoder heads the mode trains.
    pub fn head_spec(self) -> HeadSpec {
        match self {
            TargetMode::Spatiotemporal => HeadSpec { spatiotemporal: true, ..Default::default() },
            TargetMode::Fourier | TargetMode::InvFourier => HeadSpec { fourier: true, ..Default::default() },
        }
    }

    pub fn is_spectral(self) -> bool {
        self != TargetMode::Spatiotemporal
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatio" | "spatiotemporal" => Ok(TargetMode::Spatiotemporal),
            "fourier" => Ok(TargetMode::Fourier),
            "inv-fourier" | "inv_fourier" => Ok(TargetMode::InvFourier),
            other => Err(Error::config(
                "target_mode",
                format!("unknown mode `{other}` (expected spatio, fourier or inv-fourier)"),
            )),
        }
    }
}

fn check_unit_open(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in (0, 1), got {v}")))
    }
}

fn check_common(epochs: usize, batch_size: usize, base_lr: f64, dropout: f64, warmup_frac: f64) -> Result<()> {
    if epochs == 0 {
        return Err(Error::config("epochs", "must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size", "must be at least 1"));
    }
    if !(base_lr > 0.0 && base_lr.is_finite()) {
        return Err(Error::config("base_lr", "must be positive and finite"));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::config("dropout", "must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&warmup_frac) {
        return Err(Error::config("warmup_frac", "must lie in [0, 1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub target_mode: TargetMode,
    pub mask_ratio: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    /// Fraction of optimizer steps spent in linear warmup.
    pub warmup_frac: f64,
    /// Weight of the phase term in the `fourier` loss.
    pub phase_weight: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            target_mode: TargetMode::InvFourier,
            mask_ratio: 0.3,
            epochs: 50,
            batch_size: 256,
            base_lr: 3e-3,
            dropout: 0.1,
            weight_decay: 1e-2,
            warmup_frac: 0.05,
            phase_weight: 1.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_unit_open("mask_ratio", self.mask_ratio)?;
        check_common(self.epochs, self.batch_size, self.base_lr, self.dropout, self.warmup_frac)?;
        if !(self.phase_weight >= 0.0 && self.phase_weight.is_finite()) {
            return Err(Error::config("phase_weight", "must be non-negative"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn optimizer(&self, total_steps: u64) -> AdamWConfig {
        optimizer(self.base_lr, self.weight_decay, self.warmup_frac, total_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 40,
            batch_size: 128,
            base_lr: 3e-4,
            dropout: 0.2,
            weight_decay: 1e-2,
            warmup_frac: 0.05,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        check_common(self.epochs, self.batch_size, self.base_lr, self.dropout, self.warmup_frac)?;
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }

    pub(crate) fn optimizer(&self, total_steps: u64) -> AdamWConfig {
        optimizer(self.base_lr, self.weight_decay, self.warmup_frac, total_steps)
    }
}

/// The schedule spans `total_steps + 1` points and step `s` (0-based) uses
/// point `s + 1`, so every applied rate is strictly positive.
fn optimizer(base_lr: f64, weight_decay: f64, warmup_frac: f64, total_steps: u64) -> AdamWConfig {
    AdamWConfig {
        base_lr,
        weight_decay,
        total_steps: total_steps + 1,
        warmup_steps: (warmup_frac * total_steps as f64).round() as u64,
        ..Default::default()
    }
}
