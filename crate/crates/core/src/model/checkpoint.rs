//! Checkpoint directory: `manifest.json` plus a flat little-endian
//! `weights.f32` payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HeadSpec, ModelConfig, ParamStore};
use crate::error::{Error, Result};
use crate::optim::OptState;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.f32";
const FORMAT: &str = "spectral-mae.checkpoint";
const VERSION: u32 = 1;
const OPT_FIRST: &str = "optim.exp_avg.";
const OPT_SECOND: &str = "optim.exp_avg_sq.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    /// Byte offset into `weights.f32`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub model_config: ModelConfig,
    pub heads: HeadSpec,
    /// Free-form description of how the weights were produced.
    #[serde(default)]
    pub training: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_step: Option<u64>,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub training: serde_json::Value,
    pub optimizer: Option<OptState>,
}

pub fn save_checkpoint(dir: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let dir = dir.as_ref();
    let params = &ckpt.params;
    let mut payload: Vec<u8> = Vec::with_capacity(params.total_len() * 4);
    let mut tensors = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, data: &[f64], payload: &mut Vec<u8>| {
        tensors.push(TensorRecord { name, shape, dtype: "f32".to_string(), offset: payload.len() });
        for v in data {
            payload.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    };
    let entries = params.entries();
    for e in &entries {
        push(e.name.clone(), e.shape.clone(), e.data, &mut payload);
    }
    if let Some(opt) = &ckpt.optimizer {
        if opt.first.len() != entries.len() || opt.second.len() != entries.len() {
            return Err(Error::data("optimizer state does not match parameter inventory"));
        }
        for (e, m) in entries.iter().zip(&opt.first) {
            push(format!("{OPT_FIRST}{}", e.name), e.shape.clone(), m, &mut payload);
        }
        for (e, v) in entries.iter().zip(&opt.second) {
            push(format!("{OPT_SECOND}{}", e.name), e.shape.clone(), v, &mut payload);
        }
    }
    let meta = CheckpointMeta {
        format: FORMAT.to_string(),
        version: VERSION,
        model_config: params.config.clone(),
        heads: params.head_spec(),
        training: ckpt.training.clone(),
        optimizer_step: ckpt.optimizer.as_ref().map(|o| o.step),
        tensors,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = serde_json::to_vec_pretty(&meta).expect("manifest serializes");
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, manifest).map_err(|e| Error::io(&mpath, e))?;
    let wpath = dir.join(WEIGHTS_FILE);
    fs::write(&wpath, payload).map_err(|e| Error::io(&wpath, e))?;
    Ok(())
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<CheckpointMeta> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.clone(), source })?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::data(format!("unsupported checkpoint format {} v{}", meta.format, meta.version)));
    }
    Ok(meta)
}

/// Loads a checkpoint, validating every tensor against the inventory derived
/// from the stored config and head spec.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let meta = read_manifest(dir)?;
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;

    let mut params = ParamStore::init(&meta.model_config, meta.heads, 0)?;
    let expected: Vec<(String, Vec<usize>)> = params.entries().into_iter().map(|e| (e.name, e.shape)).collect();
    let n = expected.len();
    let has_opt = meta.optimizer_step.is_some();
    let want = if has_opt { 3 * n } else { n };
    if meta.tensors.len() != want {
        return Err(Error::data(format!("checkpoint lists {} tensors, config implies {want}", meta.tensors.len())));
    }
    let read = |rec: &TensorRecord, name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        if rec.name != name || rec.shape != shape || rec.dtype != "f32" {
            return Err(Error::data(format!(
                "tensor `{}` {:?} ({}) does not match expected `{name}` {shape:?} (f32)",
                rec.name, rec.shape, rec.dtype
            )));
        }
        let len: usize = shape.iter().product();
        let end = rec.offset + 4 * len;
        if end > bytes.len() {
            return Err(Error::data(format!("payload length mismatch for tensor `{name}`")));
        }
        Ok(bytes[rec.offset..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    };

    for (e, (rec, (name, shape))) in params.entries_mut().into_iter().zip(meta.tensors.iter().zip(&expected)) {
        let values = read(rec, name, shape)?;
        e.data.copy_from_slice(&values);
    }
    let optimizer = if let Some(step) = meta.optimizer_step {
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for (i, (name, shape)) in expected.iter().enumerate() {
            first.push(read(&meta.tensors[n + i], &format!("{OPT_FIRST}{name}"), shape)?);
            second.push(read(&meta.tensors[2 * n + i], &format!("{OPT_SECOND}{name}"), shape)?);
        }
        Some(OptState { step, first, second })
    } else {
        None
    };
    if let Some(name) = params.first_non_finite() {
        return Err(Error::data(format!("non-finite values in tensor `{name}`")));
    }
    Ok(Checkpoint { params, training: meta.training, optimizer })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            patch_size: 4,
            embed_dim: 8,
            num_blocks: 2,
            num_heads: 2,
            ffn_dim: 16,
            dropout_rate: 0.1,
            in_channels: 3,
            seq_len: 30,
            rel_pos_in_block1: true,
        }
    }

    fn f32_exact(p: &mut ParamStore) {
        for e in p.entries_mut() {
            for v in e.data.iter_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    #[test]
    fn round_trip_with_optimizer_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut params =
            ParamStore::init(&cfg(), HeadSpec { fourier: true, classify: Some(4), ..Default::default() }, 2).unwrap();
        f32_exact(&mut params);
        let mut opt = OptState::new(&params);
        opt.step = 17;
        opt.first[0][3] = 0.5;
        opt.second[2][0] = 0.25;
        let ckpt = Checkpoint {
            params: params.clone(),
            training: serde_json::json!({"target_mode": "inv_fourier", "mask_ratio": 0.3}),
            optimizer: Some(opt.clone()),
        };
        save_checkpoint(dir.path(), &ckpt).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        assert_eq!(back.params, params);
        assert_eq!(back.training["target_mode"], "inv_fourier");
        let bo = back.optimizer.unwrap();
        assert_eq!((bo.step, bo.first, bo.second), (17, opt.first, opt.second));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let params = ParamStore::init(&cfg(), HeadSpec::default(), 2).unwrap();
        save_checkpoint(dir.path(), &Checkpoint { params, training: serde_json::Value::Null, optimizer: None })
            .unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut meta: CheckpointMeta = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        meta.model_config.embed_dim = 16;
        fs::write(&path, serde_json::to_vec(&meta).unwrap()).unwrap();
        let err = load_checkpoint(dir.path()).unwrap_err().to_string();
        assert!(err.contains("does not match"), "{err}");
    }

    #[test]
    fn truncated_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let params = ParamStore::init(&cfg(), HeadSpec::default(), 2).unwrap();
        save_checkpoint(dir.path(), &Checkpoint { params, training: serde_json::Value::Null, optimizer: None })
            .unwrap();
        let path = dir.path().join(WEIGHTS_FILE);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
