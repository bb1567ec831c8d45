//! Report types and their JSON, text-table and CSV renderings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{ClassificationMetrics, Metrics};
use super::TargetMode;
use crate::error::{Error, Result};

/// Run provenance attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub seed: u64,
    /// SHA-256 of the JSON-serialized configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub k: usize,
    pub knn_acc: f64,
    pub linear: ClassificationMetrics,
    pub meta: ReportMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub target_mode: TargetMode,
    pub mask_ratio: f64,
    pub loss_curve: Vec<f64>,
    pub meta: ReportMeta,
}

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Summary {
    pub fn of(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n.max(1.0);
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Pretrained,
    RandomInit,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Pretrained => "pretrained",
            Condition::RandomInit => "random_init",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiRow {
    pub fraction: f64,
    pub condition: Condition,
    /// Accuracy for classification, MSE for regression.
    pub headline: Summary,
    pub runs: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mode: TargetMode,
    pub mask_ratio: f64,
    pub headline: Summary,
    pub runs: Vec<EvalReport>,
}

/// Top-level report file; `kind` selects the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Pretrain(PretrainReport),
    Finetune(EvalReport),
    Transfer(EvalReport),
    Probe(ProbeReport),
    Semi { rows: Vec<SemiRow> },
    Ablation { rows: Vec<AblationRow> },
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Plain-text table with right-aligned numeric-looking columns.
#[derive(Debug, Clone, Default)]
pub struct TextTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl TextTable {
    pub fn new(headers: &[&str]) -> Self {
        TextTable { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].chars().count())
                    .chain([self.headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let numeric = |s: &str| s.parse::<f64>().is_ok() || s.contains('±');
        let mut out = String::new();
        let line = |cells: &[String], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| if numeric(c) { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&self.headers, &mut out);
        let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
        let _ = writeln!(out, "{}", rule.join("  "));
        for r in &self.rows {
            line(r, &mut out);
        }
        out
    }
}

fn pm(s: &Summary) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.std)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Pretrain(_) => "pretrain",
            Report::Finetune(_) => "finetune",
            Report::Transfer(_) => "transfer",
            Report::Probe(_) => "probe",
            Report::Semi { .. } => "semi",
            Report::Ablation { .. } => "ablation",
        }
    }

    pub fn to_table(&self) -> TextTable {
        match self {
            Report::Pretrain(r) => {
                let mut t = TextTable::new(&["epoch", "mean_loss"]);
                for (i, l) in r.loss_curve.iter().enumerate() {
                    t.push(vec![(i + 1).to_string(), format!("{l:.6}")]);
                }
                t
            }
            Report::Finetune(r) | Report::Transfer(r) => metrics_table(&r.metrics),
            Report::Probe(r) => {
                let mut t = TextTable::new(&["probe", "metric", "value"]);
                t.push(vec![format!("knn (k={})", r.k), "acc".into(), format!("{:.4}", r.knn_acc)]);
                t.push(vec!["linear svm".into(), "mAP".into(), opt(r.linear.map)]);
                t.push(vec!["linear svm".into(), "acc".into(), format!("{:.4}", r.linear.acc)]);
                t.push(vec!["linear svm".into(), "macro_f1".into(), format!("{:.4}", r.linear.macro_f1)]);
                t
            }
            Report::Semi { rows } => {
                let mut t = TextTable::new(&["fraction", "condition", "headline", "seeds"]);
                for r in rows {
                    t.push(vec![
                        format!("{}", r.fraction),
                        r.condition.as_str().into(),
                        pm(&r.headline),
                        r.runs.len().to_string(),
                    ]);
                }
                t
            }
            Report::Ablation { rows } => {
                let mut t = TextTable::new(&["mode", "mask_ratio", "headline", "seeds"]);
                for r in rows {
                    t.push(vec![
                        r.mode.as_str().into(),
                        format!("{}", r.mask_ratio),
                        pm(&r.headline),
                        r.runs.len().to_string(),
                    ]);
                }
                t
            }
        }
    }
}

pub fn metrics_table(m: &Metrics) -> TextTable {
    match m {
        Metrics::Classification(c) => {
            let mut t = TextTable::new(&["class", "support", "precision", "recall", "f1", "ap"]);
            for s in &c.per_class {
                t.push(vec![
                    s.class.to_string(),
                    s.support.to_string(),
                    format!("{:.4}", s.precision),
                    format!("{:.4}", s.recall),
                    format!("{:.4}", s.f1),
                    opt(s.ap),
                ]);
            }
            t.push(vec![
                "overall".into(),
                c.per_class.iter().map(|s| s.support).sum::<usize>().to_string(),
                format!("acc {:.4}", c.acc),
                String::new(),
                format!("{:.4}", c.macro_f1),
                opt(c.map),
            ]);
            t
        }
        Metrics::Regression(r) => {
            let mut t = TextTable::new(&["metric", "value"]);
            t.push(vec!["mse".into(), format!("{:.6}", r.mse)]);
            t.push(vec!["mae".into(), format!("{:.6}", r.mae)]);
            t
        }
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.json` and `<stem>.txt` into `dir`.
pub fn write_report(dir: impl AsRef<Path>, stem: &str, report: &Report) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut json = serde_json::to_vec_pretty(report).expect("report serializes");
    json.push(b'\n');
    write(&dir.join(format!("{stem}.json")), json)?;
    write(&dir.join(format!("{stem}.txt")), report.to_table().render())
}

/// `epoch,mean_loss` rows, epochs counted from 1.
pub fn write_loss_csv(path: impl AsRef<Path>, curve: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(out, "{},{l:e}", i + 1);
    }
    write(path.as_ref(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::metrics::RegressionMetrics;

    #[test]
    fn table_alignment() {
        let mut t = TextTable::new(&["name", "value"]);
        t.push(vec!["a".into(), "1.5".into()]);
        t.push(vec!["longer".into(), "10.25".into()]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "name    value");
        assert_eq!(lines[2], "a         1.5");
        assert_eq!(lines[3], "longer  10.25");
    }

    #[test]
    fn summary_stats() {
        let s = Summary::of(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Summary::of(vec![4.0]).std, 0.0);
    }

    #[test]
    fn report_round_trips_through_json() {
        let r = Report::Finetune(EvalReport {
            metrics: Metrics::Regression(RegressionMetrics { mse: 0.5, mae: 0.25 }),
            meta: ReportMeta { dataset: "x".into(), seed: 3, config_hash: config_hash(&1) },
        });
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["kind"], "finetune");
        assert_eq!(json["metrics"]["task"], "regression");
        assert_eq!(serde_json::from_value::<Report>(json).unwrap(), r);
    }

    #[test]
    fn loss_csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&path, &[0.5, 0.25]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("epoch,mean_loss\n1,5e-1\n"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(config_hash(&"a"), config_hash(&"a"));
        assert_ne!(config_hash(&"a"), config_hash(&"b"));
        assert_eq!(config_hash(&0).len(), 64);
    }
}
