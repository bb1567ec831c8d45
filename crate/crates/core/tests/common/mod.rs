//! Desk-scale synthetic task shared by the acceptance and trend suites.

#![allow(dead_code)]

use spectral_mae::model::ModelConfig;
use spectral_mae::signal_io::{gen_synthetic, Dataset, SyntheticSpec, SyntheticTarget};

pub const NUM_CLASSES: usize = 5;

/// Five 0.5 Hz bands 0.1 Hz apart, so random-init fine-tuning does not
/// saturate; 2500 records of [256 × 3] at 100 Hz, noise std 0.5.
pub fn task_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        num_examples: 2500,
        n_time: 256,
        n_channels: 3,
        num_classes: NUM_CLASSES,
        sample_rate_hz: 100.0,
        bands: (0..NUM_CLASSES)
            .map(|k| {
                let lo = 4.0 + 0.6 * k as f64;
                [lo, lo + 0.5]
            })
            .collect(),
        noise_std: 0.5,
        seed,
        target: SyntheticTarget::Classification,
    }
}

/// First 2000 records for training, last 500 for testing.
pub fn task_split(spec: &SyntheticSpec) -> (Dataset, Dataset) {
    let all = gen_synthetic(spec).unwrap();
    let train = all.select(&(0..2000).collect::<Vec<_>>());
    let test = all.select(&(2000..2500).collect::<Vec<_>>());
    (train, test)
}

pub fn task_model() -> ModelConfig {
    ModelConfig {
        patch_size: 16,
        embed_dim: 32,
        num_blocks: 2,
        num_heads: 2,
        ffn_dim: 64,
        dropout_rate: 0.1,
        in_channels: 3,
        seq_len: 256,
        rel_pos_in_block1: true,
    }
}

pub fn verdict(id: &str, pass: bool, detail: String) -> bool {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
