//! Elementwise activations, layer norm and dense-layer primitives with their
//! derivatives.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use std::ops::AddAssign;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{Linear, QkvProjection};

pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    cdf + x * pdf
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x·w + b` for a batch of rows.
pub fn linear(x: ArrayView2<'_, f64>, layer: &Linear) -> Array2<f64> {
    x.dot(&layer.w) + &layer.b
}

/// Accumulates weight/bias gradients into `grad` and returns `dx`.
pub fn linear_backward(
    x: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    layer: &Linear,
    grad: &mut Linear,
) -> Array2<f64> {
    ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grad.w);
    grad.b += &dy.sum_axis(Axis(0));
    dy.dot(&layer.w.t())
}

/// Single-row variant of [`linear`].
pub fn linear_vec(x: ArrayView1<'_, f64>, layer: &Linear) -> Array1<f64> {
    x.dot(&layer.w) + &layer.b
}

pub fn linear_vec_backward(
    x: ArrayView1<'_, f64>,
    dy: ArrayView1<'_, f64>,
    layer: &Linear,
    grad: &mut Linear,
) -> Array1<f64> {
    let x2 = x.insert_axis(Axis(1));
    let dy2 = dy.insert_axis(Axis(0));
    ndarray::linalg::general_mat_mul(1.0, &x2, &dy2, 1.0, &mut grad.w);
    grad.b += &dy;
    layer.w.dot(&dy)
}

/// `x·W` plus the query and value biases; `[S × 3d]`.
pub fn qkv_forward(x: ArrayView2<'_, f64>, p: &QkvProjection) -> Array2<f64> {
    let d = p.q_bias.len();
    let mut out = x.dot(&p.w);
    out.slice_mut(s![.., ..d]).add_assign(&p.q_bias);
    out.slice_mut(s![.., 2 * d..]).add_assign(&p.v_bias);
    out
}

/// Accumulates into `grad` and returns `dx`.
pub fn qkv_backward(
    x: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    p: &QkvProjection,
    grad: &mut QkvProjection,
) -> Array2<f64> {
    let d = p.q_bias.len();
    ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grad.w);
    grad.q_bias += &dy.slice(s![.., ..d]).sum_axis(Axis(0));
    grad.v_bias += &dy.slice(s![.., 2 * d..]).sum_axis(Axis(0));
    dy.dot(&p.w.t())
}

/// Saved state of a row-wise layer norm.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub fn layer_norm(x: ArrayView2<'_, f64>, gamma: &Array1<f64>, beta: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut x_hat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in x_hat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let scale = *s;
        row.mapv_inplace(|v| v * scale);
    }
    let y = &x_hat * gamma + beta;
    (y, NormCache { x_hat, inv_std })
}

pub fn layer_norm_backward(
    dy: ArrayView2<'_, f64>,
    cache: &NormCache,
    gamma: &Array1<f64>,
    d_gamma: &mut Array1<f64>,
    d_beta: &mut Array1<f64>,
) -> Array2<f64> {
    *d_gamma += &(&dy * &cache.x_hat).sum_axis(Axis(0));
    *d_beta += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let dx_hat = &dy * gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), s) in dx
        .axis_iter_mut(Axis(0))
        .zip(dx_hat.axis_iter(Axis(0)))
        .zip(cache.x_hat.axis_iter(Axis(0)))
        .zip(cache.inv_std.iter())
    {
        let mean_g = g.sum() / d;
        let mean_gx = g.dot(&xh) / d;
        ndarray::Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| *o = s * (gi - mean_g - xi * mean_gx));
    }
    dx
}

/// In-place numerically stable row softmax.
pub fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

/// Gradient through a row softmax given its output `p`.
pub fn softmax_rows_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let mut out = p * dp;
    for (mut row, prow) in out.axis_iter_mut(Axis(0)).zip(p.axis_iter(Axis(0))) {
        let s = row.sum();
        ndarray::Zip::from(&mut row).and(&prow).for_each(|o, &pi| *o -= pi * s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        // Φ(1) = 0.8413447460685429
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
            let h = 1e-5;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        for x in [-3.0, 0.1, 4.0] {
            let h = 1e-6;
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((fd - sigmoid(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let x = Array2::from_shape_fn((5, 16), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.9 - 2.0);
        let (_, cache) = layer_norm(x.view(), &Array1::ones(16), &Array1::zeros(16));
        for row in cache.x_hat.axis_iter(Axis(0)) {
            let mean = row.sum() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5, "{mean} {var}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut x = Array2::from_shape_fn((4, 7), |(i, j)| (i as f64 - j as f64) * 3.1);
        softmax_rows(&mut x);
        for row in x.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }
}
