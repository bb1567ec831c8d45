use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde_json::json;

use super::losses::{check_shape, downstream_example, prepare, softmax, Prepared, PretrainObjective};
use super::metrics::{argmax_rows, classification_metrics, regression_metrics, Metrics};
use super::{FinetuneConfig, PretrainConfig};
use crate::error::{Error, Result};
use crate::model::{
    head_classify, head_regress, sample_mask, Checkpoint, Dropout, EncoderTrace, HeadSpec, MaskPlan, ModelConfig,
    ParamStore,
};
use crate::optim::{adamw_step, cosine_lr, AdamWConfig, OptState};
use crate::rng;
use crate::signal_io::{Dataset, Label, Task};

/// Gradient shards per batch. Fixed so the summation order does not depend
/// on the thread count.
pub const GRADIENT_SHARDS: usize = 16;

const STREAM_SHUFFLE: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Mean loss and gradient over `items`, computed shard-parallel and reduced
/// in shard order.
fn batch_gradient<F>(params: &ParamStore, items: &[usize], f: &F) -> Result<(f64, ParamStore)>
where
    F: Fn(usize, &mut ParamStore) -> Result<f64> + Sync,
{
    let chunk = items.len().div_ceil(GRADIENT_SHARDS).max(1);
    let parts: Vec<Result<(f64, ParamStore)>> = items
        .par_chunks(chunk)
        .map(|shard| {
            let mut g = params.zeros_like();
            let mut loss = 0.0;
            for &i in shard {
                loss += f(i, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads: Option<ParamStore> = None;
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        match grads.as_mut() {
            Some(acc) => acc.add_assign(&g),
            None => grads = Some(g),
        }
    }
    let mut grads = grads.ok_or_else(|| Error::data("empty batch"))?;
    let n = items.len() as f64;
    grads.scale(1.0 / n);
    Ok((total / n, grads))
}

/// Identifies the example being processed inside the training loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepCtx {
    pub epoch: usize,
    pub step: u64,
    pub example: usize,
}

impl StepCtx {
    fn stream(&self, kind: u64) -> u64 {
        rng::stream_id(&[kind, self.epoch as u64, self.step, self.example as u64])
    }
}

/// Schedule of one training run over `n` examples.
struct LoopSpec<'a> {
    stage: &'a str,
    n: usize,
    epochs: usize,
    batch_size: usize,
    seed: u64,
}

/// Shuffled mini-batch AdamW loop; returns the per-epoch mean loss.
fn train_loop<F>(
    params: &mut ParamStore,
    spec: LoopSpec<'_>,
    opt_for: impl Fn(u64) -> AdamWConfig,
    f: F,
) -> Result<Vec<f64>>
where
    F: Fn(&ParamStore, StepCtx, &mut ParamStore) -> Result<f64> + Sync,
{
    let LoopSpec { stage, n, epochs, batch_size, seed } = spec;
    if n == 0 {
        return Err(Error::data(format!("{stage}: no training records")));
    }
    let steps_per_epoch = n.div_ceil(batch_size) as u64;
    let opt_cfg = opt_for(steps_per_epoch * epochs as u64);
    let mut state = OptState::new(params);
    let mut curve = Vec::with_capacity(epochs);
    let mut step = 0u64;
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(seed, rng::stream_id(&[STREAM_SHUFFLE, epoch as u64])));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(batch_size) {
            let snapshot: &ParamStore = params;
            let per_example = |i: usize, g: &mut ParamStore| f(snapshot, StepCtx { epoch, step, example: i }, g);
            let (loss, grads) = batch_gradient(snapshot, batch, &per_example).map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("{stage} step {step}: {msg}")),
                other => other,
            })?;
            adamw_step(params, &grads, &mut state, &opt_cfg, cosine_lr(step + 1, &opt_cfg)).map_err(|e| match e {
                Error::Numeric(msg) => Error::numeric(format!("{stage} step {step}: {msg}")),
                other => other,
            })?;
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        let mean = epoch_loss / n as f64;
        info!("{stage} epoch {}/{epochs}: loss {mean:.6}", epoch + 1);
        curve.push(mean);
    }
    Ok(curve)
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub params: ParamStore,
    pub loss_curve: Vec<f64>,
    pub config: PretrainConfig,
}

impl PretrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            training: json!({
                "stage": "pretrain",
                "target_mode": self.config.target_mode,
                "mask_ratio": self.config.mask_ratio,
                "pretrain": self.config,
                "final_loss": self.loss_curve.last(),
            }),
            optimizer: None,
        }
    }
}

/// Masked-reconstruction pretraining from a fresh initialization.
pub fn pretrain(dataset: &Dataset, model_cfg: &ModelConfig, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    check_shape(dataset, model_cfg)?;
    let mode = cfg.target_mode;
    let mut params = ParamStore::init(model_cfg, mode.head_spec(), cfg.seed)?;
    let data = prepare(dataset, model_cfg, mode.is_spectral())?;
    let objective = PretrainObjective::new(mode, cfg.phase_weight, model_cfg);
    let num_patches = model_cfg.num_patches();
    let loss_curve = train_loop(
        &mut params,
        LoopSpec { stage: "pretrain", n: data.len(), epochs: cfg.epochs, batch_size: cfg.batch_size, seed: cfg.seed },
        |total| cfg.optimizer(total),
        |p, ctx, g| {
            let plan = sample_mask(num_patches, cfg.mask_ratio, &mut rng::seeded(cfg.seed, ctx.stream(STREAM_MASK)))?;
            let mut drng = rng::seeded(cfg.seed, ctx.stream(STREAM_DROPOUT));
            let dropout = (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, rng: &mut drng });
            objective.example(p, &data[ctx.example], &plan, dropout, Some(g))
        },
    )?;
    Ok(PretrainOutcome { params, loss_curve, config: cfg.clone() })
}

/// Head layout for a downstream task.
pub fn task_heads(task: Task) -> HeadSpec {
    match task {
        Task::Classification { num_classes } => HeadSpec { classify: Some(num_classes), ..Default::default() },
        Task::Regression { dim } => HeadSpec { regress: Some(dim), ..Default::default() },
    }
}

/// Starting point for fine-tuning: the encoder of `pretrained` (or a fresh
/// one built from `model_cfg`) with a newly initialized head for `task`.
pub fn downstream_model(
    pretrained: Option<&ParamStore>,
    model_cfg: &ModelConfig,
    task: Task,
    seed: u64,
) -> Result<ParamStore> {
    match pretrained {
        Some(src) => {
            let mut p = ParamStore::init(&src.config, task_heads(task), seed)?;
            p.copy_encoder_from(src)?;
            Ok(p)
        }
        None => ParamStore::init(model_cfg, task_heads(task), seed),
    }
}

fn check_task(params: &ParamStore, task: Task) -> Result<()> {
    let spec = params.head_spec();
    let ok = match task {
        Task::Classification { num_classes } => spec.classify == Some(num_classes),
        Task::Regression { dim } => spec.regress == Some(dim) && spec.classify.is_none(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::data(format!(
            "model heads (classify {:?}, regress {:?}) do not fit task {task:?}",
            spec.classify, spec.regress
        )))
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub params: ParamStore,
    pub loss_curve: Vec<f64>,
    /// Metrics on the held-out split.
    pub metrics: Metrics,
}

/// Supervised training of the whole model (encoder and head), then
/// evaluation on `test`.
pub fn finetune(start: ParamStore, train: &Dataset, test: &Dataset, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.task() != test.task() {
        return Err(Error::data("train and test tasks differ"));
    }
    check_task(&start, train.task())?;
    check_shape(train, &start.config)?;
    check_shape(test, &start.config)?;
    let mut params = start;
    let data = prepare(train, &params.config, false)?;
    let loss_curve = train_loop(
        &mut params,
        LoopSpec { stage: "finetune", n: data.len(), epochs: cfg.epochs, batch_size: cfg.batch_size, seed: cfg.seed },
        |total| cfg.optimizer(total),
        |p, ctx, g| {
            let mut drng = rng::seeded(cfg.seed, ctx.stream(STREAM_DROPOUT));
            let dropout = (cfg.dropout > 0.0).then_some(Dropout { rate: cfg.dropout, rng: &mut drng });
            downstream_example(p, &data[ctx.example], dropout, Some(g))
        },
    )?;
    let metrics = evaluate(&params, test)?;
    Ok(FinetuneOutcome { params, loss_curve, metrics })
}

fn class_repr(params: &ParamStore, ex: &Prepared) -> Result<ndarray::Array1<f64>> {
    Ok(EncoderTrace::forward(params, ex.input.view(), &MaskPlan::none(), None)?.class_repr())
}

/// Head outputs (softmax probabilities or regression values), one row per record.
fn predict(params: &ParamStore, data: &[Prepared], task: Task) -> Result<Array2<f64>> {
    let rows: Vec<Result<ndarray::Array1<f64>>> = data
        .par_iter()
        .map(|ex| {
            let r = class_repr(params, ex)?;
            match task {
                Task::Classification { .. } => Ok(softmax(head_classify(r.view(), params)?.view())),
                Task::Regression { .. } => head_regress(r.view(), params),
            }
        })
        .collect();
    let width = task.output_dim();
    let mut out = Array2::zeros((data.len(), width));
    for (mut row, r) in out.rows_mut().into_iter().zip(rows) {
        row.assign(&r?);
    }
    Ok(out)
}

/// Metrics of the downstream head on `dataset`, without dropout.
pub fn evaluate(params: &ParamStore, dataset: &Dataset) -> Result<Metrics> {
    let task = dataset.task();
    check_task(params, task)?;
    let data = prepare(dataset, &params.config, false)?;
    let out = predict(params, &data, task)?;
    match task {
        Task::Classification { num_classes } => {
            let labels: Vec<usize> = data.iter().filter_map(|e| e.label.class_id()).collect();
            let preds = argmax_rows(out.view());
            Ok(Metrics::Classification(classification_metrics(&preds, &labels, num_classes, Some(out.view()))?))
        }
        Task::Regression { dim } => {
            let mut targets = Array2::zeros((data.len(), dim));
            for (mut row, ex) in targets.rows_mut().into_iter().zip(&data) {
                if let Label::Target(t) = &ex.label {
                    row.assign(&ndarray::ArrayView1::from(t.as_slice()));
                }
            }
            Ok(Metrics::Regression(regression_metrics(out.view(), targets.view())?))
        }
    }
}

/// Class-token representation of every record, `[n × d]`, dropout off.
pub fn extract_features(params: &ParamStore, dataset: &Dataset) -> Result<Array2<f64>> {
    let data = prepare(dataset, &params.config, false)?;
    let rows: Vec<Result<ndarray::Array1<f64>>> = data.par_iter().map(|ex| class_repr(params, ex)).collect();
    let mut out = Array2::zeros((data.len(), params.config.embed_dim));
    for (mut row, r) in out.rows_mut().into_iter().zip(rows) {
        row.assign(&r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::TargetMode;
    use crate::signal_io::{gen_synthetic, SyntheticSpec};

    fn small_model() -> ModelConfig {
        ModelConfig {
            patch_size: 8,
            embed_dim: 8,
            num_blocks: 1,
            num_heads: 2,
            ffn_dim: 16,
            dropout_rate: 0.1,
            in_channels: 2,
            seq_len: 60,
            rel_pos_in_block1: true,
        }
    }

    fn data(n: usize, seed: u64) -> Dataset {
        gen_synthetic(&SyntheticSpec {
            num_examples: n,
            n_time: 60,
            n_channels: 2,
            num_classes: 3,
            bands: vec![[2.0, 4.0], [8.0, 10.0], [14.0, 16.0]],
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick_pretrain(mode: TargetMode, seed: u64) -> PretrainOutcome {
        let cfg = PretrainConfig { target_mode: mode, epochs: 3, batch_size: 16, seed, ..Default::default() };
        pretrain(&data(40, 1), &small_model(), &cfg).unwrap()
    }

    #[test]
    fn pretrain_is_seed_deterministic() {
        let a = quick_pretrain(TargetMode::InvFourier, 4);
        let b = quick_pretrain(TargetMode::InvFourier, 4);
        assert_eq!(a.loss_curve, b.loss_curve);
        assert_eq!(a.params, b.params);
        let c = quick_pretrain(TargetMode::InvFourier, 5);
        assert_ne!(a.loss_curve, c.loss_curve);
    }

    #[test]
    fn every_mode_trains() {
        for mode in TargetMode::ALL {
            let out = quick_pretrain(mode, 0);
            assert_eq!(out.loss_curve.len(), 3);
            assert!(out.loss_curve.iter().all(|v| v.is_finite()));
            assert_eq!(out.checkpoint().training["target_mode"], mode.as_str());
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = ModelConfig { in_channels: 3, ..small_model() };
        let err = pretrain(&data(10, 0), &cfg, &PretrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "{err}");
    }

    #[test]
    fn finetune_moves_encoder_and_reports() {
        let task = Task::Classification { num_classes: 3 };
        let start = downstream_model(None, &small_model(), task, 3).unwrap();
        let cfg = FinetuneConfig { epochs: 1, batch_size: 8, base_lr: 1e-3, ..Default::default() };
        let out = finetune(start.clone(), &data(24, 2), &data(12, 3), &cfg).unwrap();
        assert!(out.params.encoder_distance(&start) > 0.0);
        let acc = out.metrics.acc().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn downstream_model_copies_encoder() {
        let pre = quick_pretrain(TargetMode::Fourier, 1);
        let task = Task::Classification { num_classes: 3 };
        let p = downstream_model(Some(&pre.params), &small_model(), task, 9).unwrap();
        assert_eq!(p.encoder_distance(&pre.params), 0.0);
        assert_eq!(p.head_spec(), task_heads(task));
    }

    #[test]
    fn head_task_mismatch() {
        let start = downstream_model(None, &small_model(), Task::Regression { dim: 2 }, 0).unwrap();
        assert!(finetune(start, &data(8, 0), &data(8, 1), &FinetuneConfig::default()).is_err());
    }

    #[test]
    fn features_are_deterministic_and_order_equivariant() {
        let p = downstream_model(None, &small_model(), Task::Classification { num_classes: 3 }, 0).unwrap();
        let d = data(6, 7);
        let a = extract_features(&p, &d).unwrap();
        assert_eq!(a, extract_features(&p, &d).unwrap());
        assert_eq!(a.dim(), (6, 8));
        let perm = [5, 0, 3, 1, 4, 2];
        let b = extract_features(&p, &d.select(&perm)).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert_eq!(b.row(i), a.row(j));
        }
    }
}
