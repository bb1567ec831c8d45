use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};

use super::{Dataset, Label, SignalRecord};
use crate::error::{Error, Result};
use crate::rng;

const DEGENERATE_STD: f64 = 1e-8;

/// Per-channel z-scoring with the population standard deviation.
/// Channels whose std is below 1e-8 are only mean-centered.
pub fn standardize(samples: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = samples.nrows().max(1) as f64;
    let mut out = samples.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if std < DEGENERATE_STD {
            col.mapv_inplace(|v| v - mean);
        } else {
            col.mapv_inplace(|v| (v - mean) / std);
        }
    }
    out
}

/// Per-sample labels of a long recording.
#[derive(Debug, Clone)]
pub enum WindowLabels {
    /// One class id per time step.
    Class(Vec<usize>),
    /// `[T × dim]` per-time-step targets.
    Target(Array2<f64>),
}

/// Cuts `[T × C]` into windows starting at `0, stride, 2·stride, …`.
///
/// Class windows take the majority label; ties go to the label that occurs
/// first inside the window. Regression windows take the mean target.
pub fn sliding_window(
    long_signal: ArrayView2<'_, f64>,
    long_labels: &WindowLabels,
    win: usize,
    stride: usize,
) -> Result<Vec<SignalRecord>> {
    let t_len = long_signal.nrows();
    if win == 0 || win > t_len {
        return Err(Error::config("win", format!("window {win} must be in 1..={t_len}")));
    }
    if stride == 0 {
        return Err(Error::config("stride", "must be >= 1"));
    }
    let label_len = match long_labels {
        WindowLabels::Class(v) => v.len(),
        WindowLabels::Target(a) => a.nrows(),
    };
    if label_len != t_len {
        return Err(Error::data(format!("label length {label_len} does not match signal length {t_len}")));
    }
    let count = (t_len - win) / stride + 1;
    let records = (0..count)
        .map(|w| {
            let start = w * stride;
            let samples = long_signal.slice(ndarray::s![start..start + win, ..]).to_owned();
            let label = match long_labels {
                WindowLabels::Class(v) => Label::Class(majority_label(&v[start..start + win])),
                WindowLabels::Target(a) => {
                    let window = a.slice(ndarray::s![start..start + win, ..]);
                    Label::Target(window.mean_axis(Axis(0)).expect("non-empty window").to_vec())
                }
            };
            SignalRecord { samples, label }
        })
        .collect();
    Ok(records)
}

fn majority_label(labels: &[usize]) -> usize {
    // label -> (count, first position)
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (pos, &l) in labels.iter().enumerate() {
        tally.entry(l).or_insert((0, pos)).0 += 1;
    }
    tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(l, _)| l)
        .expect("non-empty window")
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_frac: 0.8, val_frac_of_train: 0.2, seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(Error::config("train_frac", "must lie in (0, 1)"));
        }
        if !(self.val_frac_of_train >= 0.0 && self.val_frac_of_train < 1.0) {
            return Err(Error::config("val_frac_of_train", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Index partition produced by [`split_indices`]; each list is ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(spec.seed, 0x0053_504c_4954));
    let n_test = ((1.0 - spec.train_frac) * n as f64).round() as usize;
    let n_train_all = n - n_test.min(n);
    let n_val = (spec.val_frac_of_train * n_train_all as f64).round() as usize;
    let n_train = n_train_all - n_val.min(n_train_all);
    if n_test == 0 || n_train == 0 || (spec.val_frac_of_train > 0.0 && n_val == 0) {
        return Err(Error::data(format!(
            "split of {n} records leaves an empty partition (train {n_train}, val {n_val}, test {n_test})"
        )));
    }
    let mut test = order[..n_test].to_vec();
    let mut val = order[n_test..n_test + n_val].to_vec();
    let mut train = order[n_test + n_val..].to_vec();
    test.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Ok(SplitIndices { train, val, test })
}

/// Deterministic `(train, val, test)` split.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let idx = split_indices(dataset.len(), spec)?;
    Ok((dataset.select(&idx.train), dataset.select(&idx.val), dataset.select(&idx.test)))
}

/// Indices kept by [`subsample_labels`], ascending.
pub fn subsample_indices(labels: Option<&[usize]>, n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("fraction", "must lie in (0, 1]"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let target = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut rng = rng::seeded(seed, 0x5355_4253);
    let mut picked: Vec<usize> = match labels {
        None => index::sample(&mut rng, n, target).into_vec(),
        Some(labels) => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, &c) in labels.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            let alloc = stratified_allocation(&by_class.values().map(Vec::len).collect::<Vec<_>>(), target);
            by_class
                .values()
                .zip(alloc)
                .flat_map(|(members, k)| {
                    index::sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]).collect::<Vec<_>>()
                })
                .collect()
        }
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Largest-remainder allocation of `target` draws over classes of the given
/// sizes, topped up so every class gets one draw when `target` allows it.
fn stratified_allocation(sizes: &[usize], target: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let quotas: Vec<f64> = sizes.iter().map(|&s| target as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = target - alloc.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &c in by_remainder.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    if target >= sizes.len() {
        while let Some(empty) = alloc.iter().position(|&a| a == 0) {
            let donor = (0..alloc.len()).max_by(|&a, &b| alloc[a].cmp(&alloc[b]).then(b.cmp(&a))).unwrap();
            if alloc[donor] <= 1 {
                break;
            }
            alloc[donor] -= 1;
            alloc[empty] += 1;
        }
    }
    alloc
}

/// Keeps `max(1, round(fraction·n))` records, stratified per class for
/// classification datasets.
pub fn subsample_labels(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    let labels = train.class_ids();
    let idx = subsample_indices(labels.as_deref(), train.len(), fraction, seed)?;
    Ok(train.select(&idx))
}
