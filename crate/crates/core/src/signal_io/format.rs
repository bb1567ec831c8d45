//! Directory format: `meta.json`, `data.f32` and `labels.u32` / `labels.f32`.
//!
//! All payloads are little-endian. `data.f32` is laid out record-major, then
//! time, then channel. Regression labels are record-major, then target dim.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, Label, SignalRecord, Task};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const DATA_FILE: &str = "data.f32";
pub const CLASS_LABEL_FILE: &str = "labels.u32";
pub const TARGET_LABEL_FILE: &str = "labels.f32";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_records: usize,
    pub n_time: usize,
    pub n_channels: usize,
    pub sample_rate_hz: f64,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_dim: Option<usize>,
}

impl DatasetMeta {
    fn task(&self) -> Result<Task> {
        match self.task.as_str() {
            "classification" => {
                let num_classes = self
                    .num_classes
                    .ok_or_else(|| Error::data("meta.json: classification task without num_classes"))?;
                Ok(Task::Classification { num_classes })
            }
            "regression" => {
                let dim =
                    self.target_dim.ok_or_else(|| Error::data("meta.json: regression task without target_dim"))?;
                Ok(Task::Regression { dim })
            }
            other => Err(Error::data(format!("meta.json: unknown task `{other}`"))),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let meta_bytes = read_file(&meta_path)?;
    let meta: DatasetMeta =
        serde_json::from_slice(&meta_bytes).map_err(|source| Error::Json { path: meta_path.clone(), source })?;
    let task = meta.task()?;
    let (n, t_len, c_len) = (meta.num_records, meta.n_time, meta.n_channels);
    if n > 0 && (t_len == 0 || c_len == 0) {
        return Err(Error::data("meta.json: n_time and n_channels must be >= 1"));
    }

    let data = read_file(&dir.join(DATA_FILE))?;
    let per_record = t_len * c_len;
    let expected = n * per_record * 4;
    if data.len() != expected {
        return Err(Error::data(format!(
            "payload length mismatch in {DATA_FILE}: {} bytes, expected {expected}",
            data.len()
        )));
    }
    let values: Vec<f32> = data.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        let r = pos / per_record;
        let t = (pos % per_record) / c_len;
        let c = pos % c_len;
        return Err(Error::data(format!("non-finite sample at record {r}, t={t}, c={c}")));
    }

    let labels: Vec<Label> = match task {
        Task::Classification { num_classes } => {
            let raw = read_file(&dir.join(CLASS_LABEL_FILE))?;
            if raw.len() != n * 4 {
                return Err(Error::data(format!(
                    "payload length mismatch in {CLASS_LABEL_FILE}: {} bytes, expected {}",
                    raw.len(),
                    n * 4
                )));
            }
            raw.chunks_exact(4)
                .enumerate()
                .map(|(i, b)| {
                    let c = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
                    if c >= num_classes {
                        Err(Error::data(format!("class id out of range at record {i}: {c} >= {num_classes}")))
                    } else {
                        Ok(Label::Class(c))
                    }
                })
                .collect::<Result<_>>()?
        }
        Task::Regression { dim } => {
            let raw = read_file(&dir.join(TARGET_LABEL_FILE))?;
            if raw.len() != n * dim * 4 {
                return Err(Error::data(format!(
                    "payload length mismatch in {TARGET_LABEL_FILE}: {} bytes, expected {}",
                    raw.len(),
                    n * dim * 4
                )));
            }
            let vals: Vec<f64> =
                raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect();
            vals.chunks(dim).map(|c| Label::Target(c.to_vec())).collect()
        }
    };

    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let slice = &values[i * per_record..(i + 1) * per_record];
            let samples = Array2::from_shape_fn((t_len, c_len), |(t, c)| slice[t * c_len + c] as f64);
            SignalRecord { samples, label }
        })
        .collect();
    Dataset::new(meta.name, task, meta.sample_rate_hz, records)
}

/// Writes `dataset` in the directory format. Samples are narrowed to f32.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (n_time, n_channels) = dataset.shape().unwrap_or((0, 0));
    let (task, num_classes, target_dim) = match dataset.task() {
        Task::Classification { num_classes } => ("classification", Some(num_classes), None),
        Task::Regression { dim } => ("regression", None, Some(dim)),
    };
    let meta = DatasetMeta {
        name: dataset.name().to_string(),
        num_records: dataset.len(),
        n_time,
        n_channels,
        sample_rate_hz: dataset.sample_rate_hz(),
        task: task.to_string(),
        num_classes,
        target_dim,
    };

    let mut data = Vec::with_capacity(dataset.len() * n_time * n_channels * 4);
    let mut labels = Vec::new();
    for r in dataset.records() {
        for v in r.samples.iter() {
            data.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        match &r.label {
            Label::Class(c) => labels.extend_from_slice(&(*c as u32).to_le_bytes()),
            Label::Target(t) => {
                for v in t {
                    labels.extend_from_slice(&(*v as f32).to_le_bytes());
                }
            }
        }
    }
    let label_file = if num_classes.is_some() { CLASS_LABEL_FILE } else { TARGET_LABEL_FILE };
    let meta_json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    write(&dir.join(META_FILE), &meta_json)?;
    write(&dir.join(DATA_FILE), &data)?;
    write(&dir.join(label_file), &labels)?;
    Ok(())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(num_records: usize, n_time: usize, n_channels: usize, num_classes: usize) -> Dataset {
        let records = (0..num_records)
            .map(|i| SignalRecord {
                samples: Array2::from_shape_fn((n_time, n_channels), |(t, c)| {
                    (i * 1000 + t * 10 + c) as f64 * 0.25 - 3.0
                }),
                label: Label::Class(i % num_classes),
            })
            .collect();
        Dataset::new("small", Task::Classification { num_classes }, 200.0, records).unwrap()
    }

    #[test]
    fn ten_record_directory_loads() {
        let dir = tempfile::tempdir().unwrap();
        let ds = small(10, 50, 16, 18);
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back.shape(), Some((50, 16)));
        assert_eq!(back.task(), Task::Classification { num_classes: 18 });
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(3, 8, 2, 2), dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("payload length mismatch"), "{err}");
    }

    #[test]
    fn class_id_equal_to_num_classes_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(2, 4, 1, 18), dir.path()).unwrap();
        fs::write(
            dir.path().join(CLASS_LABEL_FILE),
            [0u32, 18].iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>(),
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("class id out of range"), "{err}");
    }

    #[test]
    fn non_finite_sample_error_is_located() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&small(2, 4, 3, 2), dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&path).unwrap();
        // record 1, t=2, c=1
        let pos = (12 + 2 * 3 + 1) * 4;
        bytes[pos..pos + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        fs::write(&path, bytes).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("record 1, t=2, c=1"), "{err}");
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn regression_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = (0..4)
            .map(|i| SignalRecord {
                samples: Array2::from_elem((5, 2), i as f64),
                label: Label::Target(vec![i as f64 * 0.5, -1.0, 2.0]),
            })
            .collect();
        let ds = Dataset::new("reg", Task::Regression { dim: 3 }, 100.0, records).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert!(dir.path().join(TARGET_LABEL_FILE).exists());
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }
}
