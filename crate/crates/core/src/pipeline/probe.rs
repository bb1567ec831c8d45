//! Frozen-feature probes: k-nearest neighbours and one-vs-all linear SVMs.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::metrics::{argmax_rows, classification_metrics, ClassificationMetrics};
use crate::error::{Error, Result};

fn check_pair(feats: ArrayView2<'_, f64>, labels: &[usize], what: &str) -> Result<()> {
    if feats.nrows() != labels.len() {
        return Err(Error::data(format!("{what}: {} feature rows but {} labels", feats.nrows(), labels.len())));
    }
    if feats.is_empty() {
        return Err(Error::data(format!("{what}: no features")));
    }
    Ok(())
}

/// Top-1 accuracy of a `k`-NN majority vote under Euclidean distance.
/// Ties go to the class with the smallest summed distance, then the lowest id.
pub fn knn_probe(
    train: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test: ArrayView2<'_, f64>,
    test_labels: &[usize],
    k: usize,
) -> Result<f64> {
    check_pair(train, train_labels, "knn train")?;
    check_pair(test, test_labels, "knn test")?;
    if train.ncols() != test.ncols() {
        return Err(Error::data("knn: train and test feature widths differ"));
    }
    if k == 0 || k > train.nrows() {
        return Err(Error::config("k", format!("must lie in 1..={}", train.nrows())));
    }
    let num_classes = train_labels.iter().max().map_or(0, |m| m + 1);
    let train_sq: Array1<f64> = train.map_axis(Axis(1), |r| r.dot(&r));
    let mut correct = 0usize;
    for (row, &label) in test.rows().into_iter().zip(test_labels) {
        let cross = train.dot(&row);
        let row_sq = row.dot(&row);
        let mut dist: Vec<(f64, usize)> = train_sq
            .iter()
            .zip(&cross)
            .enumerate()
            .map(|(i, (s, c))| ((s - 2.0 * c + row_sq).max(0.0).sqrt(), i))
            .collect();
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; num_classes];
        let mut summed = vec![0.0f64; num_classes];
        for &(d, i) in &dist[..k] {
            votes[train_labels[i]] += 1;
            summed[train_labels[i]] += d;
        }
        let best = (0..num_classes)
            .max_by(|&a, &b| votes[a].cmp(&votes[b]).then(summed[b].total_cmp(&summed[a])).then(b.cmp(&a)))
            .expect("at least one class");
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_labels.len() as f64)
}

/// Subgradient-descent settings of the linear probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearProbeConfig {
    pub l2: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for LinearProbeConfig {
    fn default() -> Self {
        LinearProbeConfig { l2: 1e-4, iterations: 500, learning_rate: 0.5 }
    }
}

/// Per-column mean and std of `train`; zero-variance columns keep std 1.
fn zscore_stats(train: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = train.mean_axis(Axis(0)).expect("non-empty");
    let std = train.var_axis(Axis(0), 0.0).mapv(|v| if v > 1e-12 { v.sqrt() } else { 1.0 });
    (mean, std)
}

/// One-vs-all hinge-loss linear classifiers with L2 penalty, trained by
/// full-batch subgradient descent with step `η/√t`; evaluated on `test`.
/// Features are z-scored with training statistics.
pub fn linear_probe(
    train: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test: ArrayView2<'_, f64>,
    test_labels: &[usize],
    cfg: &LinearProbeConfig,
) -> Result<ClassificationMetrics> {
    check_pair(train, train_labels, "linear probe train")?;
    check_pair(test, test_labels, "linear probe test")?;
    if train.ncols() != test.ncols() {
        return Err(Error::data("linear probe: train and test feature widths differ"));
    }
    let num_classes = train_labels.iter().chain(test_labels).max().map_or(0, |m| m + 1);
    let present = {
        let mut seen = vec![false; num_classes];
        train_labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if present < 2 {
        return Err(Error::data("linear probe needs at least two classes in training"));
    }
    let (mean, std) = zscore_stats(train);
    let x = (&train - &mean) / &std;
    let xt = (&test - &mean) / &std;
    let (n, d) = x.dim();

    // w: [d × K], b: [K]; labels in {−1, +1} per class column
    let y = Array2::from_shape_fn((n, num_classes), |(i, k)| if train_labels[i] == k { 1.0 } else { -1.0 });
    let mut w = Array2::<f64>::zeros((d, num_classes));
    let mut b = Array1::<f64>::zeros(num_classes);
    for t in 1..=cfg.iterations {
        let margins = (x.dot(&w) + &b) * &y;
        // subgradient of mean hinge: −y·x over violators
        let active =
            Array2::from_shape_fn(
                (n, num_classes),
                |(i, k)| {
                    if margins[[i, k]] < 1.0 {
                        -y[[i, k]] / n as f64
                    } else {
                        0.0
                    }
                },
            );
        let gw = x.t().dot(&active) + &(&w * cfg.l2);
        let gb = active.sum_axis(Axis(0));
        let eta = cfg.learning_rate / (t as f64).sqrt();
        w.scaled_add(-eta, &gw);
        b.scaled_add(-eta, &gb);
    }
    let scores = xt.dot(&w) + &b;
    let preds = argmax_rows(scores.view());
    classification_metrics(&preds, test_labels, num_classes, Some(scores.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Normal};

    fn blobs(n_per: usize, centers: &[f64], width: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::seeded(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = n_per * centers.len();
        let labels: Vec<usize> = (0..n).map(|i| i % centers.len()).collect();
        let x = Array2::from_shape_fn((n, width), |(i, _)| centers[labels[i]] + noise.sample(&mut r));
        (x, labels)
    }

    #[test]
    fn knn_duplicate_point_k1() {
        let train = ndarray::array![[0.0, 0.0], [5.0, 5.0], [9.0, 1.0]];
        let labels = [2, 0, 1];
        let acc = knn_probe(train.view(), &labels, train.slice(ndarray::s![1..2, ..]), &[0], 1).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn knn_separated_blobs() {
        let (tr, ltr) = blobs(60, &[-10.0, 10.0], 4, 1);
        let (te, lte) = blobs(30, &[-10.0, 10.0], 4, 2);
        assert_eq!(knn_probe(tr.view(), &ltr, te.view(), &lte, 20).unwrap(), 1.0);
    }

    #[test]
    fn knn_single_label_train() {
        let (tr, _) = blobs(10, &[0.0], 3, 1);
        let (te, lte) = blobs(10, &[0.0, 1.0, 2.0, 3.0], 3, 2);
        let acc = knn_probe(tr.view(), &vec![1; tr.nrows()], te.view(), &lte, 5).unwrap();
        assert_eq!(acc, 0.25);
    }

    #[test]
    fn knn_tie_prefers_closer_class_then_lower_id() {
        let train = ndarray::array![[1.0], [-2.0], [3.0], [-3.0]];
        // k=2: neighbours 1.0 (class 1) and -2.0 (class 0); class 1 is closer
        let acc = knn_probe(train.view(), &[1, 0, 1, 0], ndarray::array![[0.0]].view(), &[1], 2).unwrap();
        assert_eq!(acc, 1.0);
        // equal distances: lowest class id
        let train = ndarray::array![[1.0], [-1.0]];
        let acc = knn_probe(train.view(), &[1, 0], ndarray::array![[0.0]].view(), &[0], 2).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn knn_k_bounds() {
        let train = ndarray::array![[1.0]];
        assert!(knn_probe(train.view(), &[0], train.view(), &[0], 2).is_err());
        assert!(knn_probe(train.view(), &[0], train.view(), &[0], 0).is_err());
    }

    #[test]
    fn linear_probe_separable() {
        let (tr, ltr) = blobs(50, &[-3.0, 3.0], 5, 3);
        let (te, lte) = blobs(50, &[-3.0, 3.0], 5, 4);
        let m = linear_probe(tr.view(), &ltr, te.view(), &lte, &LinearProbeConfig::default()).unwrap();
        assert!(m.map.unwrap() >= 0.99, "{m:?}");
    }

    #[test]
    fn linear_probe_random_features_near_chance() {
        let (tr, ltr) = blobs(200, &[0.0; 5], 8, 5);
        let (te, lte) = blobs(200, &[0.0; 5], 8, 6);
        let m = linear_probe(tr.view(), &ltr, te.view(), &lte, &LinearProbeConfig::default()).unwrap();
        assert!((m.map.unwrap() - 0.2).abs() <= 0.05, "{m:?}");
    }

    #[test]
    fn linear_probe_duplicated_columns() {
        let (tr, ltr) = blobs(40, &[-2.0, 0.0, 2.0], 3, 7);
        let (te, lte) = blobs(40, &[-2.0, 0.0, 2.0], 3, 8);
        let dup = |a: &Array2<f64>| ndarray::concatenate![Axis(1), *a, *a];
        let cfg = LinearProbeConfig::default();
        let a = linear_probe(tr.view(), &ltr, te.view(), &lte, &cfg).unwrap().map.unwrap();
        let b = linear_probe(dup(&tr).view(), &ltr, dup(&te).view(), &lte, &cfg).unwrap().map.unwrap();
        assert!((a - b).abs() < 0.02, "{a} vs {b}");
    }

    #[test]
    fn linear_probe_single_class_rejected() {
        let (tr, _) = blobs(10, &[0.0], 2, 1);
        assert!(linear_probe(tr.view(), &[0; 10], tr.view(), &[0; 10], &LinearProbeConfig::default()).is_err());
    }

    #[test]
    fn probes_do_not_mutate_inputs() {
        let (tr, ltr) = blobs(20, &[-1.0, 1.0], 3, 9);
        let before = tr.clone();
        knn_probe(tr.view(), &ltr, tr.view(), &ltr, 3).unwrap();
        linear_probe(tr.view(), &ltr, tr.view(), &ltr, &LinearProbeConfig::default()).unwrap();
        assert_eq!(tr, before);
    }
}
