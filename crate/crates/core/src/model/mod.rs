//! Patch-embedding transformer encoder with masked-token pre-training heads.
//!
//! Data flow for one example:
//!
//! ```text
//! x [N × C] ─pad→ [L·P × C] ─patch conv + GELU→ E [L × d]
//!   ─mask substitution, prepend class token, + positional table→ tokens [(L+1) × d]
//!   ─pre-norm blocks (block 1 with relative position bias)→ R [(L+1) × d]
//!   ─heads: class / regression (R[0]), spatiotemporal decoder (masked rows),
//!           Fourier decoder (flattened R[1..])
//! ```
//!
//! All computation is `f64`. Every forward function that training uses has a
//! hand-written backward pass in the same module.

mod checkpoint;
mod encoder;
mod heads;
pub mod layers;
mod mask;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, Checkpoint, CheckpointMeta, TensorRecord};
pub use encoder::{
    assemble_tokens, embed_patches, encode, encode_with_attention, pad_signal, AttentionMaps, Dropout, EncoderTrace,
};
pub use heads::{
    decode_fourier, decode_fourier_backward, decode_spatiotemporal, decode_spatiotemporal_backward, head_backward,
    head_classify, head_regress, FourierOutput,
};
pub use mask::{sample_mask, MaskPlan};
pub use params::{
    param_count, BlockParams, HeadSpec, Heads, Linear, ParamStore, QkvProjection, TensorEntry, TensorEntryMut,
    TensorGroup,
};

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Samples per patch (`P`); also the conv kernel and stride.
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f64,
    pub in_channels: usize,
    /// Unpadded input length `N`.
    pub seq_len: usize,
    pub rel_pos_in_block1: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            patch_size: 4,
            embed_dim: 128,
            num_blocks: 4,
            num_heads: 4,
            ffn_dim: 512,
            dropout_rate: 0.1,
            in_channels: 16,
            seq_len: 50,
            rel_pos_in_block1: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::config("patch_size", "must be >= 1"));
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embed_dim", "must be >= 1"));
        }
        if self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::config(
                "num_heads",
                format!("embed_dim {} is not divisible by {}", self.embed_dim, self.num_heads),
            ));
        }
        if self.ffn_dim == 0 {
            return Err(Error::config("ffn_dim", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate", "must lie in [0, 1)"));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be >= 1"));
        }
        if self.seq_len == 0 {
            return Err(Error::config("seq_len", "must be >= 1"));
        }
        Ok(())
    }

    /// `L = ceil(N / P)`.
    pub fn num_patches(&self) -> usize {
        self.seq_len.div_ceil(self.patch_size)
    }

    /// Length after right zero-padding to a whole number of patches.
    pub fn padded_len(&self) -> usize {
        self.num_patches() * self.patch_size
    }

    /// Half-spectrum bins of the padded signal.
    pub fn num_bins(&self) -> usize {
        fourier::num_bins(self.padded_len())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Number of tokens including the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn has_rel_bias(&self) -> bool {
        self.rel_pos_in_block1 && self.num_blocks > 0
    }
}
