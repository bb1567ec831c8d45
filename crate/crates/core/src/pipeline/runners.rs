//! Experiment grids built from pretraining and fine-tuning.

use serde::Serialize;

use super::report::{config_hash, AblationRow, Condition, EvalReport, ReportMeta, SemiRow, Summary};
use super::train::{downstream_model, finetune, pretrain};
use super::{losses::check_shape, FinetuneConfig, PretrainConfig, TargetMode};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamStore};
use crate::signal_io::{subsample_labels, Dataset};

pub const DEFAULT_FRACTIONS: [f64; 4] = [0.01, 0.1, 0.2, 0.5];
pub const DEFAULT_RATIOS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.6];

fn meta<T: Serialize>(dataset: &Dataset, seed: u64, config: &T) -> ReportMeta {
    ReportMeta { dataset: dataset.name().to_string(), seed, config_hash: config_hash(config) }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        Err(Error::config("seeds", "at least one seed is required"))
    } else {
        Ok(())
    }
}

/// Fine-tunes from `pretrained` and from random initialization on label
/// subsets of `train`, for every fraction and seed. Rows are ordered by
/// fraction, then condition.
pub fn run_semi_supervised(
    pretrained: &ParamStore,
    train: &Dataset,
    test: &Dataset,
    fractions: &[f64],
    seeds: &[u64],
    cfg: &FinetuneConfig,
) -> Result<Vec<SemiRow>> {
    check_seeds(seeds)?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::config("fractions", format!("{f} is outside (0, 1]")));
    }
    cfg.validate()?;
    check_shape(train, &pretrained.config)?;
    let task = train.task();
    let mut rows = Vec::new();
    for &fraction in fractions {
        for condition in [Condition::Pretrained, Condition::RandomInit] {
            let mut runs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let subset = subsample_labels(train, fraction, seed)?;
                let init = (condition == Condition::Pretrained).then_some(pretrained);
                let start = downstream_model(init, &pretrained.config, task, seed)?;
                let ft = FinetuneConfig { seed, ..cfg.clone() };
                let out = finetune(start, &subset, test, &ft)?;
                runs.push(EvalReport { metrics: out.metrics, meta: meta(train, seed, &(&ft, fraction, condition)) });
            }
            rows.push(SemiRow {
                fraction,
                condition,
                headline: Summary::of(runs.iter().map(|r| r.metrics.headline()).collect()),
                runs,
            });
        }
    }
    Ok(rows)
}

/// Fine-tunes the encoder of `source` on a destination task with a freshly
/// initialized head.
pub fn run_transfer(source: &ParamStore, train: &Dataset, test: &Dataset, cfg: &FinetuneConfig) -> Result<EvalReport> {
    check_shape(train, &source.config)?;
    let start = downstream_model(Some(source), &source.config, train.task(), cfg.seed)?;
    let out = finetune(start, train, test, cfg)?;
    Ok(EvalReport { metrics: out.metrics, meta: meta(train, cfg.seed, &(cfg, "transfer")) })
}

/// Pretrain + fine-tune for every (mode, ratio, seed). Rows are ordered by
/// mode, then ratio.
#[allow(clippy::too_many_arguments)]
pub fn run_mask_ablation(
    train: &Dataset,
    test: &Dataset,
    model_cfg: &ModelConfig,
    pre_cfg: &PretrainConfig,
    ft_cfg: &FinetuneConfig,
    ratios: &[f64],
    modes: &[TargetMode],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    check_seeds(seeds)?;
    for &r in ratios {
        PretrainConfig { mask_ratio: r, ..pre_cfg.clone() }.validate()?;
    }
    ft_cfg.validate()?;
    model_cfg.validate()?;
    check_shape(train, model_cfg)?;
    let mut rows = Vec::new();
    for &mode in modes {
        for &ratio in ratios {
            let mut runs = Vec::with_capacity(seeds.len());
            for &seed in seeds {
                let pc = PretrainConfig { target_mode: mode, mask_ratio: ratio, seed, ..pre_cfg.clone() };
                let pre = pretrain(train, model_cfg, &pc)?;
                let start = downstream_model(Some(&pre.params), model_cfg, train.task(), seed)?;
                let fc = FinetuneConfig { seed, ..ft_cfg.clone() };
                let out = finetune(start, train, test, &fc)?;
                runs.push(EvalReport { metrics: out.metrics, meta: meta(train, seed, &(&pc, &fc)) });
            }
            rows.push(AblationRow {
                mode,
                mask_ratio: ratio,
                headline: Summary::of(runs.iter().map(|r| r.metrics.headline()).collect()),
                runs,
            });
        }
    }
    Ok(rows)
}
