//! Pretraining, fine-tuning, probes, metrics and experiment runners.

mod config;
mod losses;
mod metrics;
mod probe;
mod report;
mod runners;
mod train;

pub use config::{FinetuneConfig, PretrainConfig, TargetMode};
pub use losses::{
    check_shape, downstream_example, loss_fourier, loss_inv_fourier, loss_spatiotemporal, prepare, softmax, Prepared,
    PretrainObjective,
};
pub use metrics::{
    argmax_rows, average_precision, classification_metrics, regression_metrics, ClassStats, ClassificationMetrics,
    Metrics, RegressionMetrics,
};
pub use probe::{knn_probe, linear_probe, LinearProbeConfig};
pub use report::{
    config_hash, metrics_table, write_loss_csv, write_report, AblationRow, Condition, EvalReport, PretrainReport,
    ProbeReport, Report, ReportMeta, SemiRow, Summary, TextTable,
};
pub use runners::{run_mask_ablation, run_semi_supervised, run_transfer, DEFAULT_FRACTIONS, DEFAULT_RATIOS};
pub use train::{
    downstream_model, evaluate, extract_features, finetune, pretrain, task_heads, FinetuneOutcome, PretrainOutcome,
    GRADIENT_SHARDS,
};
