use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, RngCore};

use super::layers::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, qkv_backward, qkv_forward, softmax_rows,
    softmax_rows_backward, NormCache,
};
use super::{BlockParams, MaskPlan, ParamStore};
use crate::error::{Error, Result};

/// Dropout applied to attention weights and the FFN output of every block.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

impl Dropout<'_> {
    /// Inverted-dropout mask: `0` with probability `rate`, else `1/(1−rate)`.
    fn mask(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        let keep = 1.0 - self.rate;
        let scale = 1.0 / keep;
        Array2::from_shape_simple_fn((rows, cols), || if self.rng.random::<f64>() < keep { scale } else { 0.0 })
    }
}

/// Right zero-pads `x` to `padded_len` rows.
pub fn pad_signal(x: ArrayView2<'_, f64>, padded_len: usize) -> Array2<f64> {
    let mut out = Array2::zeros((padded_len, x.ncols()));
    let n = x.nrows().min(padded_len);
    out.slice_mut(s![..n, ..]).assign(&x.slice(s![..n, ..]));
    out
}

fn check_input(x: ArrayView2<'_, f64>, params: &ParamStore) -> Result<()> {
    let cfg = &params.config;
    let (n, c) = x.dim();
    if c != cfg.in_channels || (n != cfg.seq_len && n != cfg.padded_len()) {
        return Err(Error::data(format!(
            "input shape [{n} × {c}] does not match model [{} × {}]",
            cfg.seq_len, cfg.in_channels
        )));
    }
    Ok(())
}

/// Rows of the padded signal grouped per patch: `[L × P·C]`.
fn patch_matrix(x: ArrayView2<'_, f64>, params: &ParamStore) -> Array2<f64> {
    let cfg = &params.config;
    let padded = pad_signal(x, cfg.padded_len());
    padded
        .into_shape_with_order((cfg.num_patches(), cfg.patch_size * cfg.in_channels))
        .expect("contiguous padded signal")
}

/// Non-overlapping patch convolution followed by exact GELU: `[L × d]`.
pub fn embed_patches(x: ArrayView2<'_, f64>, params: &ParamStore) -> Result<Array2<f64>> {
    check_input(x, params)?;
    let pre = linear(patch_matrix(x, params).view(), &params.patch);
    Ok(pre.mapv(gelu))
}

/// Substitutes masked patches, prepends the class token and adds positions.
pub fn assemble_tokens(embeddings: ArrayView2<'_, f64>, plan: &MaskPlan, params: &ParamStore) -> Array2<f64> {
    let l = embeddings.nrows();
    let d = embeddings.ncols();
    let mut tokens = Array2::zeros((l + 1, d));
    tokens.row_mut(0).assign(&params.cls_token);
    tokens.slice_mut(s![1.., ..]).assign(&embeddings);
    for &i in plan.indices() {
        tokens.row_mut(i + 1).assign(&params.mask_token);
    }
    tokens += &params.pos_embed;
    tokens
}

/// Runs the transformer blocks over assembled tokens.
pub fn encode(tokens: ArrayView2<'_, f64>, params: &ParamStore, dropout: Option<Dropout<'_>>) -> Result<Array2<f64>> {
    Ok(run_blocks(tokens.to_owned(), params, dropout)?.0)
}

/// Attention probabilities indexed `[block][head]`, each `[(L+1) × (L+1)]`.
pub type AttentionMaps = Vec<Vec<Array2<f64>>>;

/// Like [`encode`], also returning the attention probabilities (before
/// dropout).
pub fn encode_with_attention(tokens: ArrayView2<'_, f64>, params: &ParamStore) -> Result<(Array2<f64>, AttentionMaps)> {
    let (out, caches) = run_blocks(tokens.to_owned(), params, None)?;
    Ok((out, caches.into_iter().map(|c| c.probs).collect()))
}

struct BlockCache {
    ln1: NormCache,
    h1: Array2<f64>,
    qkv: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn_masks: Option<Vec<Array2<f64>>>,
    ctx: Array2<f64>,
    ln2: NormCache,
    h2: Array2<f64>,
    f1: Array2<f64>,
    g: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

fn run_blocks(
    mut x: Array2<f64>,
    params: &ParamStore,
    mut dropout: Option<Dropout<'_>>,
) -> Result<(Array2<f64>, Vec<BlockCache>)> {
    let mut caches = Vec::with_capacity(params.blocks.len());
    for (b, block) in params.blocks.iter().enumerate() {
        let rel = if b == 0 { params.rel_bias.as_ref() } else { None };
        let (z, cache) = block_forward(x, block, rel, params, dropout.as_mut());
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite output in encoder block {b}")));
        }
        caches.push(cache);
        x = z;
    }
    Ok((x, caches))
}

fn block_forward(
    x: Array2<f64>,
    p: &BlockParams,
    rel: Option<&Array2<f64>>,
    params: &ParamStore,
    mut dropout: Option<&mut Dropout<'_>>,
) -> (Array2<f64>, BlockCache) {
    let cfg = &params.config;
    let (s_len, d) = x.dim();
    let heads = cfg.num_heads;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();

    let (h1, ln1) = layer_norm(x.view(), &p.ln1_g, &p.ln1_b);
    let qkv = qkv_forward(h1.view(), &p.qkv);
    let mut ctx = Array2::zeros((s_len, d));
    let mut probs = Vec::with_capacity(heads);
    let mut attn_masks = dropout.as_ref().map(|_| Vec::with_capacity(heads));
    for h in 0..heads {
        let q = qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let mut logits = q.dot(&k.t()) * scale;
        if let Some(rel) = rel {
            add_rel_bias(&mut logits, rel, h);
        }
        softmax_rows(&mut logits);
        let weights = match dropout.as_deref_mut() {
            Some(drop) => {
                let m = drop.mask(s_len, s_len);
                let w = &logits * &m;
                attn_masks.as_mut().expect("masks vec").push(m);
                w
            }
            None => logits.clone(),
        };
        ctx.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&weights.dot(&v));
        probs.push(logits);
    }
    let y = &x + &linear(ctx.view(), &p.out);
    let (h2, ln2) = layer_norm(y.view(), &p.ln2_g, &p.ln2_b);
    let f1 = linear(h2.view(), &p.ffn1);
    let g = f1.mapv(gelu);
    let mut f2 = linear(g.view(), &p.ffn2);
    let ffn_mask = dropout.map(|drop| {
        let m = drop.mask(s_len, d);
        f2 *= &m;
        m
    });
    let z = &y + &f2;
    let cache = BlockCache { ln1, h1, qkv, probs, attn_masks, ctx, ln2, h2, f1, g, ffn_mask };
    (z, cache)
}

/// Patch-to-patch logits get `rel[i − j + L − 1, h]`; class-token pairs get 0.
fn add_rel_bias(logits: &mut Array2<f64>, rel: &Array2<f64>, head: usize) {
    let s_len = logits.nrows();
    let l = s_len - 1;
    for i in 1..s_len {
        for j in 1..s_len {
            logits[[i, j]] += rel[[i + l - 1 - j, head]];
        }
    }
}

fn block_backward(
    dz: Array2<f64>,
    cache: &BlockCache,
    p: &BlockParams,
    grad: &mut BlockParams,
    mut rel_grad: Option<&mut Array2<f64>>,
    params: &ParamStore,
) -> Array2<f64> {
    let cfg = &params.config;
    let d = cfg.embed_dim;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let s_len = dz.nrows();

    // FFN branch
    let mut df2 = dz.clone();
    if let Some(m) = &cache.ffn_mask {
        df2 *= m;
    }
    let dg = linear_backward(cache.g.view(), df2.view(), &p.ffn2, &mut grad.ffn2);
    let mut df1 = dg;
    ndarray::Zip::from(&mut df1).and(&cache.f1).for_each(|g, &f| *g *= gelu_grad(f));
    let dh2 = linear_backward(cache.h2.view(), df1.view(), &p.ffn1, &mut grad.ffn1);
    let dy = dz + &layer_norm_backward(dh2.view(), &cache.ln2, &p.ln2_g, &mut grad.ln2_g, &mut grad.ln2_b);

    // attention branch
    let dctx = linear_backward(cache.ctx.view(), dy.view(), &p.out, &mut grad.out);
    let mut dqkv = Array2::zeros((s_len, 3 * d));
    for h in 0..cfg.num_heads {
        let q = cache.qkv.slice(s![.., h * dh..(h + 1) * dh]);
        let k = cache.qkv.slice(s![.., d + h * dh..d + (h + 1) * dh]);
        let v = cache.qkv.slice(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]);
        let probs = &cache.probs[h];
        let weights = match &cache.attn_masks {
            Some(m) => probs * &m[h],
            None => probs.clone(),
        };
        let dctx_h = dctx.slice(s![.., h * dh..(h + 1) * dh]);
        let mut dweights = dctx_h.dot(&v.t());
        let dv = weights.t().dot(&dctx_h);
        if let Some(m) = &cache.attn_masks {
            dweights *= &m[h];
        }
        let dlogits = softmax_rows_backward(probs, &dweights);
        if let Some(rel_grad) = rel_grad.as_deref_mut() {
            let l = s_len - 1;
            for i in 1..s_len {
                for j in 1..s_len {
                    rel_grad[[i + l - 1 - j, h]] += dlogits[[i, j]];
                }
            }
        }
        let dq = dlogits.dot(&k) * scale;
        let dk = dlogits.t().dot(&q) * scale;
        dqkv.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&dq);
        dqkv.slice_mut(s![.., d + h * dh..d + (h + 1) * dh]).assign(&dk);
        dqkv.slice_mut(s![.., 2 * d + h * dh..2 * d + (h + 1) * dh]).assign(&dv);
    }
    let dh1 = qkv_backward(cache.h1.view(), dqkv.view(), &p.qkv, &mut grad.qkv);
    dy + &layer_norm_backward(dh1.view(), &cache.ln1, &p.ln1_g, &mut grad.ln1_g, &mut grad.ln1_b)
}

/// Everything the backward pass needs from one encoder forward.
pub struct EncoderTrace {
    patches: Array2<f64>,
    pre: Array2<f64>,
    plan: MaskPlan,
    blocks: Vec<BlockCache>,
    /// Encoder output `R`, `[(L+1) × d]`; row 0 is the class token.
    pub output: Array2<f64>,
}

impl EncoderTrace {
    /// Full forward from a raw `[N × C]` (or already padded) standardized signal.
    pub fn forward(
        params: &ParamStore,
        x: ArrayView2<'_, f64>,
        plan: &MaskPlan,
        dropout: Option<Dropout<'_>>,
    ) -> Result<Self> {
        check_input(x, params)?;
        if plan.indices().last().is_some_and(|&i| i >= params.config.num_patches()) {
            return Err(Error::data("mask index out of range"));
        }
        let patches = patch_matrix(x, params);
        let pre = linear(patches.view(), &params.patch);
        let embeddings = pre.mapv(gelu);
        let tokens = assemble_tokens(embeddings.view(), plan, params);
        let (output, blocks) = run_blocks(tokens, params, dropout)?;
        Ok(EncoderTrace { patches, pre, plan: plan.clone(), blocks, output })
    }

    /// Accumulates into `grads` the parameter gradients given `dR`.
    pub fn backward(&self, params: &ParamStore, d_output: Array2<f64>, grads: &mut ParamStore) {
        let mut dx = d_output;
        for (b, cache) in self.blocks.iter().enumerate().rev() {
            let rel_grad = if b == 0 { grads.rel_bias.as_mut() } else { None };
            // rel_grad borrows grads.rel_bias, block grads borrow grads.blocks
            let block_grad = &mut grads.blocks[b];
            dx = block_backward(dx, cache, &params.blocks[b], block_grad, rel_grad, params);
        }
        grads.pos_embed += &dx;
        grads.cls_token += &dx.row(0);
        let l = self.pre.nrows();
        let mut d_pre = Array2::zeros(self.pre.raw_dim());
        for i in 0..l {
            if self.plan.contains(i) {
                grads.mask_token += &dx.row(i + 1);
            } else {
                d_pre.row_mut(i).assign(&dx.row(i + 1));
            }
        }
        ndarray::Zip::from(&mut d_pre).and(&self.pre).for_each(|g, &p| *g *= gelu_grad(p));
        ndarray::linalg::general_mat_mul(1.0, &self.patches.t(), &d_pre, 1.0, &mut grads.patch.w);
        grads.patch.b += &d_pre.sum_axis(Axis(0));
    }

    pub fn class_repr(&self) -> Array1<f64> {
        self.output.row(0).to_owned()
    }
}
