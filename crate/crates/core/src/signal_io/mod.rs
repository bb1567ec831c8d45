//! Windowed multichannel signal datasets.
//!
//! A [`Dataset`] is a list of equally shaped `[n_time × n_channels]` records
//! carrying either a class id or a regression target vector. This module also
//! holds the preprocessing steps applied before a record reaches the encoder
//! (standardization, windowing, splitting, label subsampling), the on-disk
//! directory format and a synthetic band-limited generator.

mod format;
mod preprocess;
mod synthetic;

use ndarray::Array2;

use crate::error::{Error, Result};

pub use format::{load_dataset, save_dataset, DatasetMeta};
pub use preprocess::{
    sliding_window, split, split_indices, standardize, subsample_indices, subsample_labels, SplitIndices, SplitSpec,
    WindowLabels,
};
pub use synthetic::{gen_synthetic, SyntheticSpec, SyntheticTarget};

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Target(Vec<f64>),
}

impl Label {
    pub fn class_id(&self) -> Option<usize> {
        match self {
            Label::Class(c) => Some(*c),
            Label::Target(_) => None,
        }
    }

    pub fn target(&self) -> Option<&[f64]> {
        match self {
            Label::Class(_) => None,
            Label::Target(t) => Some(t),
        }
    }
}

/// One windowed example: `samples` is `[n_time × n_channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub samples: Array2<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification { num_classes: usize },
    Regression { dim: usize },
}

impl Task {
    /// Width of the downstream head output.
    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Classification { num_classes } => num_classes,
            Task::Regression { dim } => dim,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Task::Classification { .. })
    }
}

/// An immutable, shape-consistent collection of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    task: Task,
    sample_rate_hz: f64,
    records: Vec<SignalRecord>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, task: Task, sample_rate_hz: f64, records: Vec<SignalRecord>) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::config("sample_rate_hz", "must be a positive finite number"));
        }
        match task {
            Task::Classification { num_classes: 0 } => {
                return Err(Error::config("num_classes", "must be at least 1"));
            }
            Task::Regression { dim: 0 } => {
                return Err(Error::config("target_dim", "must be at least 1"));
            }
            _ => {}
        }
        if let Some(first) = records.first() {
            let shape = first.samples.dim();
            for (i, r) in records.iter().enumerate() {
                if r.samples.dim() != shape {
                    return Err(Error::data(format!(
                        "record {i} has shape {:?}, expected {:?}",
                        r.samples.dim(),
                        shape
                    )));
                }
                if shape.0 == 0 || shape.1 == 0 {
                    return Err(Error::data("records must have at least one time step and channel"));
                }
                if let Some((t, c)) = first_non_finite(&r.samples) {
                    return Err(Error::data(format!("non-finite sample at record {i}, t={t}, c={c}")));
                }
                check_label(i, &r.label, task)?;
            }
        }
        Ok(Dataset { name: name.into(), task, sample_rate_hz, records })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn records(&self) -> &[SignalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(n_time, n_channels)`, or `None` for an empty dataset.
    pub fn shape(&self) -> Option<(usize, usize)> {
        self.records.first().map(|r| r.samples.dim())
    }

    /// New dataset holding the records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            task: self.task,
            sample_rate_hz: self.sample_rate_hz,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    pub fn class_ids(&self) -> Option<Vec<usize>> {
        self.records.iter().map(|r| r.label.class_id()).collect()
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

fn check_label(index: usize, label: &Label, task: Task) -> Result<()> {
    match (label, task) {
        (Label::Class(c), Task::Classification { num_classes }) => {
            if *c >= num_classes {
                return Err(Error::data(format!("class id out of range at record {index}: {c} >= {num_classes}")));
            }
        }
        (Label::Target(t), Task::Regression { dim }) => {
            if t.len() != dim {
                return Err(Error::data(format!("record {index} target has {} values, expected {dim}", t.len())));
            }
            if let Some(j) = t.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!("non-finite target at record {index}, dim {j}")));
            }
        }
        _ => return Err(Error::data(format!("record {index} label kind does not match dataset task"))),
    }
    Ok(())
}

fn first_non_finite(samples: &Array2<f64>) -> Option<(usize, usize)> {
    samples.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(idx, _)| idx)
}
