//! Run configuration: one JSON file covering every command, with flag
//! overrides applied on top.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{
    FinetuneConfig, LinearProbeConfig, PretrainConfig, TargetMode, DEFAULT_FRACTIONS, DEFAULT_RATIOS,
};
use crate::signal_io::{SplitSpec, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSettings {
    /// Neighbours for the kNN probe.
    pub k: usize,
    pub linear: LinearProbeConfig,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings { k: 20, linear: LinearProbeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiSettings {
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SemiSettings {
    fn default() -> Self {
        let mut fractions = DEFAULT_FRACTIONS.to_vec();
        fractions.push(1.0);
        SemiSettings { fractions, seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSettings {
    pub ratios: Vec<f64>,
    pub modes: Vec<TargetMode>,
    pub seeds: Vec<u64>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings { ratios: DEFAULT_RATIOS.to_vec(), modes: TargetMode::ALL.to_vec(), seeds: vec![0, 1, 2] }
    }
}

/// Parameters of every command. `model.seq_len` and `model.in_channels` are
/// taken from the dataset a command runs on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: SyntheticSpec,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub probe: ProbeSettings,
    pub semi: SemiSettings,
    pub ablation: AblationSettings,
}

impl RunConfig {
    /// Reads `path`, or returns defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| {
            // Unknown keys and wrong types are configuration errors.
            Error::config("config", format!("{}: {e}", path.display()))
        })
    }

    /// Sets every seed in the file to `seed`.
    pub fn set_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.split.seed = seed;
        self.pretrain.seed = seed;
        self.finetune.seed = seed;
    }

    /// Copies the data shape into the model config.
    pub fn fit_model_to(&mut self, shape: (usize, usize)) {
        self.model.seq_len = shape.0;
        self.model.in_channels = shape.1;
    }
}

pub(crate) fn parse_list<T: std::str::FromStr>(field: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| Error::config(field, format!("`{}`: {e}", s.trim()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"pretrain": {"epochs": 3, "target_mode": "fourier"}}"#).unwrap();
        assert_eq!(cfg.pretrain.epochs, 3);
        assert_eq!(cfg.pretrain.target_mode, TargetMode::Fourier);
        assert_eq!(cfg.pretrain.mask_ratio, PretrainConfig::default().mask_ratio);
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"pretrian": {}}"#).unwrap();
        let err = RunConfig::load(Some(&path)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("pretrian"), "{err}");
    }

    #[test]
    fn list_parsing_names_field() {
        assert_eq!(parse_list::<f64>("fractions", "0.1, 0.5").unwrap(), vec![0.1, 0.5]);
        let err = parse_list::<f64>("fractions", "0.1,x").unwrap_err();
        assert!(err.to_string().contains("fractions"));
    }
}
