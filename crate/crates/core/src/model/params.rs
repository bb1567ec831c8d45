use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng;

/// Dense layer `y = x·w + b` with `w: [in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn xavier(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Linear {
            w: Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-limit..limit)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub qkv: QkvProjection,
    pub out: Linear,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub ffn1: Linear,
    pub ffn2: Linear,
}

/// Fused query/key/value projection. Keys carry no bias: a key bias shifts
/// every logit of a query row by the same amount, which softmax ignores.
#[derive(Debug, Clone, PartialEq)]
pub struct QkvProjection {
    /// `[d × 3d]`, columns ordered query | key | value.
    pub w: Array2<f64>,
    pub q_bias: Array1<f64>,
    pub v_bias: Array1<f64>,
}

/// Which output heads a parameter store carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HeadSpec {
    pub spatiotemporal: bool,
    pub fourier: bool,
    pub classify: Option<usize>,
    pub regress: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Heads {
    /// `d → P·C`, applied per masked patch.
    pub spatio: Option<Linear>,
    /// `L·d → K·C` for magnitude (pre-softplus) and phase.
    pub fourier_mag: Option<Linear>,
    pub fourier_phase: Option<Linear>,
    pub classify: Option<Linear>,
    pub regress: Option<Linear>,
}

/// All learnable tensors of the encoder and its heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub config: ModelConfig,
    /// Patch kernel `[P·C × d]`; row `t·C + c` is kernel tap `t` of channel `c`.
    pub patch: Linear,
    pub cls_token: Array1<f64>,
    pub mask_token: Array1<f64>,
    /// `[(L+1) × d]`.
    pub pos_embed: Array2<f64>,
    pub blocks: Vec<BlockParams>,
    /// `[(2L−1) × heads]`, indexed by signed patch offset `i − j + L − 1`.
    pub rel_bias: Option<Array2<f64>>,
    pub heads: Heads,
}

/// How the optimizer treats a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorGroup {
    /// Weight matrices: decoupled weight decay applies.
    Decay,
    /// Norm scales/offsets, biases, tokens and positional tables.
    NoDecay,
}

#[derive(Debug)]
pub struct TensorEntry<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: TensorGroup,
    pub data: &'a [f64],
}

#[derive(Debug)]
pub struct TensorEntryMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub group: TensorGroup,
    pub data: &'a mut [f64],
}

macro_rules! collect_entries {
    ($s:expr, $entry:ident, $slice:ident, $iter:ident, $opt:ident) => {{
        let cfg = $s.config.clone();
        let (p, c, d) = (cfg.patch_size, cfg.in_channels, cfg.embed_dim);
        let mut out = Vec::new();
        macro_rules! push {
            ($name:expr, $shape:expr, $group:expr, $arr:expr) => {
                out.push($entry {
                    name: $name.to_string(),
                    shape: $shape,
                    group: $group,
                    data: $arr.$slice().expect("standard layout"),
                })
            };
        }
        macro_rules! push_linear {
            ($prefix:expr, $lin:expr) => {{
                let shape = vec![$lin.w.nrows(), $lin.w.ncols()];
                let bias = vec![$lin.b.len()];
                push!(format!("{}.weight", $prefix), shape, TensorGroup::Decay, $lin.w);
                push!(format!("{}.bias", $prefix), bias, TensorGroup::NoDecay, $lin.b);
            }};
        }
        push!("patch_embed.weight", vec![p, c, d], TensorGroup::Decay, $s.patch.w);
        push!("patch_embed.bias", vec![d], TensorGroup::NoDecay, $s.patch.b);
        push!("cls_token", vec![d], TensorGroup::NoDecay, $s.cls_token);
        push!("mask_token", vec![d], TensorGroup::NoDecay, $s.mask_token);
        let pos_shape = vec![$s.pos_embed.nrows(), d];
        push!("pos_embed", pos_shape, TensorGroup::NoDecay, $s.pos_embed);
        for (i, b) in $s.blocks.$iter().enumerate() {
            push!(format!("blocks.{i}.norm1.weight"), vec![d], TensorGroup::NoDecay, b.ln1_g);
            push!(format!("blocks.{i}.norm1.bias"), vec![d], TensorGroup::NoDecay, b.ln1_b);
            push!(format!("blocks.{i}.attn.qkv.weight"), vec![d, 3 * d], TensorGroup::Decay, b.qkv.w);
            push!(format!("blocks.{i}.attn.q_bias"), vec![d], TensorGroup::NoDecay, b.qkv.q_bias);
            push!(format!("blocks.{i}.attn.v_bias"), vec![d], TensorGroup::NoDecay, b.qkv.v_bias);
            push_linear!(format!("blocks.{i}.attn.proj"), b.out);
            push!(format!("blocks.{i}.norm2.weight"), vec![d], TensorGroup::NoDecay, b.ln2_g);
            push!(format!("blocks.{i}.norm2.bias"), vec![d], TensorGroup::NoDecay, b.ln2_b);
            push_linear!(format!("blocks.{i}.ffn.fc1"), b.ffn1);
            push_linear!(format!("blocks.{i}.ffn.fc2"), b.ffn2);
        }
        if let Some(rel) = $s.rel_bias.$opt() {
            let shape = vec![rel.nrows(), rel.ncols()];
            push!("blocks.0.attn.rel_pos_bias", shape, TensorGroup::NoDecay, rel);
        }
        if let Some(l) = $s.heads.spatio.$opt() {
            push_linear!("decoder.spatiotemporal", l);
        }
        if let Some(l) = $s.heads.fourier_mag.$opt() {
            push_linear!("decoder.fourier.magnitude", l);
        }
        if let Some(l) = $s.heads.fourier_phase.$opt() {
            push_linear!("decoder.fourier.phase", l);
        }
        if let Some(l) = $s.heads.classify.$opt() {
            push_linear!("head.classify", l);
        }
        if let Some(l) = $s.heads.regress.$opt() {
            push_linear!("head.regress", l);
        }
        out
    }};
}

const TOKEN_INIT_STD: f64 = 0.02;

impl ParamStore {
    /// Randomly initialised store for `config` carrying the heads in `heads`.
    pub fn init(config: &ModelConfig, heads: HeadSpec, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed, 0x494e_4954);
        let (p, c, d) = (config.patch_size, config.in_channels, config.embed_dim);
        let l = config.num_patches();
        let normal = Normal::new(0.0, TOKEN_INIT_STD).expect("valid std");
        let gauss = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| Array1::from_shape_fn(n, |_| normal.sample(rng));
        let patch = Linear::xavier(p * c, d, &mut rng);
        let cls_token = gauss(d, &mut rng);
        let mask_token = gauss(d, &mut rng);
        let pos_embed = gauss((l + 1) * d, &mut rng).into_shape_with_order((l + 1, d)).expect("pos shape");
        let blocks = (0..config.num_blocks)
            .map(|_| BlockParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                qkv: QkvProjection {
                    w: Linear::xavier(d, 3 * d, &mut rng).w,
                    q_bias: Array1::zeros(d),
                    v_bias: Array1::zeros(d),
                },
                out: Linear::xavier(d, d, &mut rng),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                ffn1: Linear::xavier(d, config.ffn_dim, &mut rng),
                ffn2: Linear::xavier(config.ffn_dim, d, &mut rng),
            })
            .collect();
        let rel_bias = config.has_rel_bias().then(|| Array2::zeros((2 * l - 1, config.num_heads)));
        let mut store = ParamStore {
            config: config.clone(),
            patch,
            cls_token,
            mask_token,
            pos_embed,
            blocks,
            rel_bias,
            heads: Heads::default(),
        };
        store.set_heads(heads, &mut rng);
        Ok(store)
    }

    /// Replaces all heads with freshly initialised ones per `spec`.
    pub fn reinit_heads(&mut self, spec: HeadSpec, seed: u64) {
        let mut rng = rng::seeded(seed, 0x4845_4144);
        self.heads = Heads::default();
        self.set_heads(spec, &mut rng);
    }

    fn set_heads(&mut self, spec: HeadSpec, rng: &mut impl Rng) {
        let cfg = &self.config;
        let (d, l) = (cfg.embed_dim, cfg.num_patches());
        let kc = cfg.num_bins() * cfg.in_channels;
        if spec.spatiotemporal {
            self.heads.spatio = Some(Linear::xavier(d, cfg.patch_size * cfg.in_channels, rng));
        }
        if spec.fourier {
            self.heads.fourier_mag = Some(Linear::xavier(l * d, kc, rng));
            self.heads.fourier_phase = Some(Linear::xavier(l * d, kc, rng));
        }
        if let Some(k) = spec.classify {
            self.heads.classify = Some(Linear::xavier(d, k, rng));
        }
        if let Some(k) = spec.regress {
            self.heads.regress = Some(Linear::xavier(d, k, rng));
        }
    }

    pub fn head_spec(&self) -> HeadSpec {
        HeadSpec {
            spatiotemporal: self.heads.spatio.is_some(),
            fourier: self.heads.fourier_mag.is_some(),
            classify: self.heads.classify.as_ref().map(Linear::fan_out),
            regress: self.heads.regress.as_ref().map(Linear::fan_out),
        }
    }

    /// Same inventory, every value zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for e in self.entries_mut() {
            e.data.fill(value);
        }
    }

    /// Tensors in canonical order (the checkpoint and optimizer order).
    pub fn entries(&self) -> Vec<TensorEntry<'_>> {
        collect_entries!(self, TensorEntry, as_slice, iter, as_ref)
    }

    pub fn entries_mut(&mut self) -> Vec<TensorEntryMut<'_>> {
        collect_entries!(self, TensorEntryMut, as_slice_mut, iter_mut, as_mut)
    }

    pub fn total_len(&self) -> usize {
        self.entries().iter().map(|e| e.data.len()).sum()
    }

    /// Element count of encoder, patch embedding, tokens and positional
    /// tables (heads excluded).
    pub fn encoder_len(&self) -> usize {
        self.entries().iter().filter(|e| !is_head_tensor(&e.name)).map(|e| e.data.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ParamStore) {
        for (a, b) in self.entries_mut().into_iter().zip(other.entries()) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for e in self.entries_mut() {
            for x in e.data.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// Euclidean distance between the encoder (non-head) tensors of two stores.
    pub fn encoder_distance(&self, other: &ParamStore) -> f64 {
        self.entries()
            .iter()
            .zip(other.entries())
            .filter(|(a, _)| !is_head_tensor(&a.name))
            .flat_map(|(a, b)| a.data.iter().zip(b.data).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    /// Copies every non-head tensor from `src`. Inventories must agree.
    pub fn copy_encoder_from(&mut self, src: &ParamStore) -> Result<()> {
        if src.config != self.config {
            return Err(Error::data("encoder configs differ"));
        }
        for (dst, s) in self.entries_mut().into_iter().zip(src.entries()) {
            if is_head_tensor(&dst.name) {
                continue;
            }
            if dst.name != s.name || dst.data.len() != s.data.len() {
                return Err(Error::data(format!("tensor `{}` does not match `{}`", dst.name, s.name)));
            }
            dst.data.copy_from_slice(s.data);
        }
        Ok(())
    }

    pub fn first_non_finite(&self) -> Option<String> {
        self.entries().into_iter().find(|e| e.data.iter().any(|v| !v.is_finite())).map(|e| e.name)
    }
}

pub(crate) fn is_head_tensor(name: &str) -> bool {
    name.starts_with("decoder.") || name.starts_with("head.")
}

/// Exact encoder parameter count for `config`: patch embedding, class and
/// mask tokens, positional table, blocks and the relative position table.
pub fn param_count(config: &ModelConfig) -> usize {
    let (p, c, d, f) = (config.patch_size, config.in_channels, config.embed_dim, config.ffn_dim);
    let l = config.num_patches();
    let patch = p * c * d + d;
    let tokens = 2 * d;
    let pos = (l + 1) * d;
    let per_block = 2 * d + (d * 3 * d + 2 * d) + (d * d + d) + 2 * d + (d * f + f) + (f * d + d);
    let rel = if config.has_rel_bias() { (2 * l - 1) * config.num_heads } else { 0 };
    patch + tokens + pos + config.num_blocks * per_block + rel
}
