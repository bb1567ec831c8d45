//! Command-line front end. Every command validates its full configuration
//! and inputs before it creates any output.

mod config;
mod reconstruct;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::{AblationSettings, ProbeSettings, RunConfig, SemiSettings};
pub use reconstruct::{reconstruct, ReconstructOptions, ReconstructSummary};

use crate::error::{Error, Result};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, HeadSpec, ModelConfig, ParamStore};
use crate::pipeline::{
    check_shape, config_hash, downstream_model, extract_features, finetune, knn_probe, linear_probe, pretrain,
    run_mask_ablation, run_semi_supervised, run_transfer, write_loss_csv, write_report, EvalReport, PretrainConfig,
    PretrainReport, ProbeReport, Report, ReportMeta, TargetMode,
};
use crate::signal_io::{gen_synthetic, load_dataset, save_dataset, split, subsample_labels, Dataset, SyntheticTarget};
use config::parse_list;

#[derive(Debug, Parser)]
#[command(name = "spectral-mae", version, about = "Masked-patch pretraining for multichannel signals")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed applied to data generation, splitting, pretraining and fine-tuning.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a band-limited synthetic dataset.
    GenData(GenDataArgs),
    /// Masked-reconstruction pretraining on every record of a dataset.
    Pretrain(PretrainArgs),
    /// Supervised fine-tuning from a checkpoint or from random initialization.
    Finetune(FinetuneArgs),
    /// kNN and linear probes on frozen encoder features.
    Probe(ProbeArgs),
    /// Mask-ratio and target-mode grid of pretrain plus fine-tune runs.
    Ablate(AblateArgs),
    /// Pretrained versus random-init fine-tuning on label fractions.
    Semi(SemiArgs),
    /// Fine-tune a pretrained encoder on another dataset.
    Transfer(TransferArgs),
    /// Export the spectral reconstruction of one masked record.
    Reconstruct(ReconstructArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub num_examples: Option<usize>,
    #[arg(long)]
    pub n_time: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    /// Frequency targets instead of band labels.
    #[arg(long)]
    pub regression: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out dataset; without it `--data` is split per the `split` section.
    #[arg(long)]
    pub test_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn_dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// spatio | fourier | inv-fourier
    #[arg(long, alias = "mode")]
    pub target: Option<TargetMode>,
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub phase_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Pretrained checkpoint directory; random initialization without it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fraction of labelled training records to use.
    #[arg(long)]
    pub labels: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Encoder checkpoint; a randomly initialized encoder without it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated mask ratios.
    #[arg(long)]
    pub ratios: Option<String>,
    /// Comma-separated target modes.
    #[arg(long)]
    pub modes: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SemiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Comma-separated label fractions.
    #[arg(long)]
    pub fractions: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Record to reconstruct.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 0)]
    pub mask_seed: u64,
    /// Defaults to the ratio the checkpoint was pretrained with.
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    /// Also write an SVG line plot.
    #[arg(long)]
    pub svg: bool,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.deterministic {
        // Only fails when a global pool already exists, which happens when
        // the library is driven in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = |default: &str| cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(default));
    match cli.command {
        Command::GenData(a) => cmd_gen_data(cfg, a, &out("data")),
        Command::Pretrain(a) => cmd_pretrain(cfg, a, &out("pretrain")),
        Command::Finetune(a) => cmd_finetune(cfg, a, &out("finetune")),
        Command::Probe(a) => cmd_probe(cfg, a, &out("probe")),
        Command::Ablate(a) => cmd_ablate(cfg, a, &out("ablate")),
        Command::Semi(a) => cmd_semi(cfg, a, &out("semi")),
        Command::Transfer(a) => cmd_transfer(cfg, a, &out("transfer")),
        Command::Reconstruct(a) => {
            let out = out("reconstruct");
            let opts =
                ReconstructOptions { index: a.index, mask_seed: a.mask_seed, mask_ratio: a.mask_ratio, svg: a.svg };
            let summary = reconstruct(&a.checkpoint, &a.data, &opts, &out)?;
            println!(
                "record {} ({} masked patches): reconstruction mse {:.6}, signal energy {:.6}",
                opts.index, summary.masked_patches, summary.mse, summary.signal_energy
            );
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn apply_model(model: &mut ModelConfig, a: &ModelArgs) {
    set(&mut model.patch_size, a.patch_size);
    set(&mut model.embed_dim, a.embed_dim);
    set(&mut model.num_blocks, a.blocks);
    set(&mut model.num_heads, a.heads);
    set(&mut model.ffn_dim, a.ffn_dim);
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn meta(dataset: &Dataset, seed: u64, cfg: &RunConfig) -> ReportMeta {
    ReportMeta { dataset: dataset.name().to_string(), seed, config_hash: config_hash(cfg) }
}

fn emit(out: &Path, stem: &str, report: &Report) -> Result<()> {
    write_report(out, stem, report)?;
    print!("{}", report.to_table().render());
    println!("wrote {}", out.join(format!("{stem}.json")).display());
    Ok(())
}

/// Train and test sets: `--test-data` when given, otherwise a seeded split
/// of `--data`. The validation part of a split is only logged.
struct Splits {
    train: Dataset,
    val: Option<Dataset>,
    test: Dataset,
}

fn load_splits(a: &DataArgs, cfg: &RunConfig) -> Result<Splits> {
    let data = load_dataset(&a.data)?;
    if let Some(test) = &a.test_data {
        return Ok(Splits { train: data, val: None, test: load_dataset(test)? });
    }
    cfg.split.validate()?;
    let (train, val, test) = split(&data, &cfg.split)?;
    Ok(Splits { train, val: (!val.is_empty()).then_some(val), test })
}

fn shape_of(ds: &Dataset) -> Result<(usize, usize)> {
    ds.shape().ok_or_else(|| Error::data(format!("dataset `{}` is empty", ds.name())))
}

fn encoder_source(
    checkpoint: Option<&Path>,
    model: &ModelArgs,
    cfg: &mut RunConfig,
    train: &Dataset,
) -> Result<Option<ParamStore>> {
    match checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            check_shape(train, &ckpt.params.config)?;
            cfg.model = ckpt.params.config.clone();
            Ok(Some(ckpt.params))
        }
        None => {
            apply_model(&mut cfg.model, model);
            cfg.fit_model_to(shape_of(train)?);
            cfg.model.validate()?;
            Ok(None)
        }
    }
}

fn cmd_gen_data(mut cfg: RunConfig, a: GenDataArgs, out: &Path) -> Result<()> {
    let spec = &mut cfg.data;
    set(&mut spec.num_examples, a.num_examples);
    set(&mut spec.n_time, a.n_time);
    set(&mut spec.n_channels, a.channels);
    set(&mut spec.sample_rate_hz, a.sample_rate);
    set(&mut spec.noise_std, a.noise_std);
    if a.regression {
        spec.target = SyntheticTarget::Regression;
    }
    // gen_synthetic validates the spec before generating.
    let dataset = gen_synthetic(spec)?;
    save_dataset(&dataset, out)?;
    let (n, c) = shape_of(&dataset)?;
    println!(
        "dataset `{}`: {} records of [{n} × {c}] at {} Hz, task {:?}",
        dataset.name(),
        dataset.len(),
        dataset.sample_rate_hz(),
        dataset.task()
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_pretrain(mut cfg: RunConfig, a: PretrainArgs, out: &Path) -> Result<()> {
    let p = &mut cfg.pretrain;
    set(&mut p.target_mode, a.target);
    set(&mut p.mask_ratio, a.mask_ratio);
    set(&mut p.epochs, a.epochs);
    set(&mut p.batch_size, a.batch_size);
    set(&mut p.base_lr, a.lr);
    set(&mut p.phase_weight, a.phase_weight);
    apply_model(&mut cfg.model, &a.model);
    let dataset = load_dataset(&a.data)?;
    cfg.fit_model_to(shape_of(&dataset)?);
    cfg.model.validate()?;
    cfg.pretrain.validate()?;

    create_out(out)?;
    let outcome = pretrain(&dataset, &cfg.model, &cfg.pretrain)?;
    save_checkpoint(out.join("checkpoint"), &outcome.checkpoint())?;
    write_loss_csv(out.join("loss.csv"), &outcome.loss_curve)?;
    let report = Report::Pretrain(PretrainReport {
        target_mode: cfg.pretrain.target_mode,
        mask_ratio: cfg.pretrain.mask_ratio,
        loss_curve: outcome.loss_curve,
        meta: meta(&dataset, cfg.pretrain.seed, &cfg),
    });
    emit(out, "pretrain", &report)
}

fn cmd_finetune(mut cfg: RunConfig, a: FinetuneArgs, out: &Path) -> Result<()> {
    let f = &mut cfg.finetune;
    set(&mut f.epochs, a.epochs);
    set(&mut f.batch_size, a.batch_size);
    set(&mut f.base_lr, a.lr);
    cfg.finetune.validate()?;
    if let Some(fr) = a.labels {
        if !(fr > 0.0 && fr <= 1.0) {
            return Err(Error::config("labels", format!("{fr} is outside (0, 1]")));
        }
    }
    let splits = load_splits(&a.data, &cfg)?;
    let source = encoder_source(a.checkpoint.as_deref(), &a.model, &mut cfg, &splits.train)?;
    check_shape(&splits.test, &cfg.model)?;
    if splits.train.task() != splits.test.task() {
        return Err(Error::data("train and test tasks differ"));
    }
    let seed = cfg.finetune.seed;
    let train = match a.labels {
        Some(fr) => subsample_labels(&splits.train, fr, seed)?,
        None => splits.train.clone(),
    };
    let start = downstream_model(source.as_ref(), &cfg.model, train.task(), seed)?;

    create_out(out)?;
    let outcome = finetune(start, &train, &splits.test, &cfg.finetune)?;
    if let Some(val) = &splits.val {
        let m = crate::pipeline::evaluate(&outcome.params, val)?;
        log::info!("validation {}: {:.4}", if m.acc().is_some() { "acc" } else { "mse" }, m.headline());
    }
    save_checkpoint(
        out.join("checkpoint"),
        &Checkpoint {
            params: outcome.params,
            training: json!({
                "stage": "finetune",
                "init": if source.is_some() { "pretrained" } else { "random" },
                "labels": a.labels.unwrap_or(1.0),
                "train_records": train.len(),
                "finetune": cfg.finetune,
            }),
            optimizer: None,
        },
    )?;
    write_loss_csv(out.join("loss.csv"), &outcome.loss_curve)?;
    let report = Report::Finetune(EvalReport { metrics: outcome.metrics, meta: meta(&train, seed, &cfg) });
    emit(out, "finetune", &report)
}

fn cmd_probe(mut cfg: RunConfig, a: ProbeArgs, out: &Path) -> Result<()> {
    set(&mut cfg.probe.k, a.k);
    let splits = load_splits(&a.data, &cfg)?;
    let source = encoder_source(a.checkpoint.as_deref(), &a.model, &mut cfg, &splits.train)?;
    check_shape(&splits.test, &cfg.model)?;
    let labels = |ds: &Dataset| {
        ds.class_ids()
            .ok_or_else(|| Error::data(format!("probes need a classification dataset, `{}` is not", ds.name())))
    };
    let (train_labels, test_labels) = (labels(&splits.train)?, labels(&splits.test)?);
    if cfg.probe.k == 0 || cfg.probe.k > train_labels.len() {
        return Err(Error::config("k", format!("must lie in [1, {}]", train_labels.len())));
    }
    let seed = cfg.finetune.seed;
    let params = match source {
        Some(p) => p,
        None => ParamStore::init(&cfg.model, HeadSpec::default(), seed)?,
    };

    let ftr = extract_features(&params, &splits.train)?;
    let fte = extract_features(&params, &splits.test)?;
    let knn_acc = knn_probe(ftr.view(), &train_labels, fte.view(), &test_labels, cfg.probe.k)?;
    let linear = linear_probe(ftr.view(), &train_labels, fte.view(), &test_labels, &cfg.probe.linear)?;
    create_out(out)?;
    let report = Report::Probe(ProbeReport { k: cfg.probe.k, knn_acc, linear, meta: meta(&splits.train, seed, &cfg) });
    emit(out, "probe", &report)
}

fn cmd_ablate(mut cfg: RunConfig, a: AblateArgs, out: &Path) -> Result<()> {
    if let Some(s) = &a.ratios {
        cfg.ablation.ratios = parse_list("ratios", s)?;
    }
    if let Some(s) = &a.modes {
        cfg.ablation.modes = parse_list("modes", s)?;
    }
    if let Some(s) = &a.seeds {
        cfg.ablation.seeds = parse_list("seeds", s)?;
    }
    set(&mut cfg.pretrain.epochs, a.pretrain_epochs);
    set(&mut cfg.finetune.epochs, a.finetune_epochs);
    if cfg.ablation.modes.is_empty() || cfg.ablation.ratios.is_empty() {
        return Err(Error::config("ablation", "modes and ratios must be non-empty"));
    }
    let splits = load_splits(&a.data, &cfg)?;
    apply_model(&mut cfg.model, &a.model);
    cfg.fit_model_to(shape_of(&splits.train)?);
    check_shape(&splits.test, &cfg.model)?;
    cfg.model.validate()?;
    cfg.finetune.validate()?;
    for &r in &cfg.ablation.ratios {
        PretrainConfig { mask_ratio: r, ..cfg.pretrain.clone() }.validate()?;
    }
    if cfg.ablation.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }

    create_out(out)?;
    let rows = run_mask_ablation(
        &splits.train,
        &splits.test,
        &cfg.model,
        &cfg.pretrain,
        &cfg.finetune,
        &cfg.ablation.ratios,
        &cfg.ablation.modes,
        &cfg.ablation.seeds,
    )?;
    emit(out, "ablation", &Report::Ablation { rows })
}

fn cmd_semi(mut cfg: RunConfig, a: SemiArgs, out: &Path) -> Result<()> {
    if let Some(s) = &a.fractions {
        cfg.semi.fractions = parse_list("fractions", s)?;
    }
    if let Some(s) = &a.seeds {
        cfg.semi.seeds = parse_list("seeds", s)?;
    }
    set(&mut cfg.finetune.epochs, a.epochs);
    cfg.finetune.validate()?;
    if cfg.semi.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed is required"));
    }
    if let Some(f) = cfg.semi.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::config("fractions", format!("{f} is outside (0, 1]")));
    }
    let splits = load_splits(&a.data, &cfg)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    check_shape(&splits.train, &ckpt.params.config)?;
    check_shape(&splits.test, &ckpt.params.config)?;
    cfg.model = ckpt.params.config.clone();

    create_out(out)?;
    let rows = run_semi_supervised(
        &ckpt.params,
        &splits.train,
        &splits.test,
        &cfg.semi.fractions,
        &cfg.semi.seeds,
        &cfg.finetune,
    )?;
    emit(out, "semi", &Report::Semi { rows })
}

fn cmd_transfer(mut cfg: RunConfig, a: TransferArgs, out: &Path) -> Result<()> {
    set(&mut cfg.finetune.epochs, a.epochs);
    set(&mut cfg.finetune.base_lr, a.lr);
    cfg.finetune.validate()?;
    let splits = load_splits(&a.data, &cfg)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    check_shape(&splits.train, &ckpt.params.config)?;
    check_shape(&splits.test, &ckpt.params.config)?;
    if splits.train.task() != splits.test.task() {
        return Err(Error::data("train and test tasks differ"));
    }
    cfg.model = ckpt.params.config.clone();

    create_out(out)?;
    let report = run_transfer(&ckpt.params, &splits.train, &splits.test, &cfg.finetune)?;
    let report = EvalReport { meta: ReportMeta { config_hash: config_hash(&cfg), ..report.meta }, ..report };
    emit(out, "transfer", &Report::Transfer(report))
}
