use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::layers::{linear_vec, linear_vec_backward, sigmoid, softplus};
use super::{Linear, MaskPlan, ParamStore};
use crate::error::{Error, Result};
use crate::fourier::PolarSpectrum;

fn require<'a>(head: Option<&'a Linear>, name: &str) -> Result<&'a Linear> {
    head.ok_or_else(|| Error::config("heads", format!("model has no {name} head")))
}

/// Linear decoder `d → P·C` on each masked row of `R`; one `[P × C]` patch
/// per masked index, in plan order.
pub fn decode_spatiotemporal(
    repr: ArrayView2<'_, f64>,
    plan: &MaskPlan,
    params: &ParamStore,
) -> Result<Vec<Array2<f64>>> {
    if plan.is_empty() {
        return Err(Error::data("spatiotemporal decoding needs a non-empty mask plan"));
    }
    let head = require(params.heads.spatio.as_ref(), "spatiotemporal")?;
    let cfg = &params.config;
    Ok(plan
        .indices()
        .iter()
        .map(|&i| {
            linear_vec(repr.row(i + 1), head)
                .into_shape_with_order((cfg.patch_size, cfg.in_channels))
                .expect("patch shape")
        })
        .collect())
}

/// Gradient of [`decode_spatiotemporal`]; returns `dR`.
pub fn decode_spatiotemporal_backward(
    repr: ArrayView2<'_, f64>,
    plan: &MaskPlan,
    d_patches: &[Array2<f64>],
    params: &ParamStore,
    grads: &mut ParamStore,
) -> Array2<f64> {
    let head = params.heads.spatio.as_ref().expect("spatiotemporal head");
    let ghead = grads.heads.spatio.as_mut().expect("spatiotemporal head grad");
    let mut d_repr = Array2::zeros(repr.raw_dim());
    for (&i, dp) in plan.indices().iter().zip(d_patches) {
        let dy = dp.view().into_shape_with_order(dp.len()).expect("flat patch");
        let dr = linear_vec_backward(repr.row(i + 1), dy, head, ghead);
        d_repr.row_mut(i + 1).assign(&dr);
    }
    d_repr
}

/// Fourier decoder output over the padded sequence.
#[derive(Debug, Clone)]
pub struct FourierOutput {
    /// Softplus magnitude and unconstrained phase, `[K × C]` each.
    pub polar: PolarSpectrum,
    /// Magnitude before softplus.
    pub magnitude_logits: Array2<f64>,
}

fn patch_rows_flat(repr: ArrayView2<'_, f64>) -> Array1<f64> {
    repr.slice(s![1.., ..]).iter().copied().collect()
}

/// Flattens `R[1..]` (class token excluded) and maps it to magnitude and
/// phase arrays of shape `[K × C]`, `K = L·P/2 + 1`.
pub fn decode_fourier(repr: ArrayView2<'_, f64>, params: &ParamStore) -> Result<FourierOutput> {
    let mag_head = require(params.heads.fourier_mag.as_ref(), "fourier")?;
    let phase_head = require(params.heads.fourier_phase.as_ref(), "fourier")?;
    let cfg = &params.config;
    let shape = (cfg.num_bins(), cfg.in_channels);
    let flat = patch_rows_flat(repr);
    let magnitude_logits = linear_vec(flat.view(), mag_head).into_shape_with_order(shape).expect("bins × channels");
    let phase = linear_vec(flat.view(), phase_head).into_shape_with_order(shape).expect("bins × channels");
    Ok(FourierOutput {
        polar: PolarSpectrum { magnitude: magnitude_logits.mapv(softplus), phase, n_time: cfg.padded_len() },
        magnitude_logits,
    })
}

/// Gradient of [`decode_fourier`] given `∂loss/∂magnitude` (post-softplus)
/// and `∂loss/∂phase`; returns `dR`.
pub fn decode_fourier_backward(
    repr: ArrayView2<'_, f64>,
    out: &FourierOutput,
    d_magnitude: &Array2<f64>,
    d_phase: &Array2<f64>,
    params: &ParamStore,
    grads: &mut ParamStore,
) -> Array2<f64> {
    let flat = patch_rows_flat(repr);
    let d_logits = d_magnitude * &out.magnitude_logits.mapv(sigmoid);
    let flat_view = |a: &Array2<f64>| a.iter().copied().collect::<Array1<f64>>();
    let d_flat_mag = linear_vec_backward(
        flat.view(),
        flat_view(&d_logits).view(),
        params.heads.fourier_mag.as_ref().expect("fourier head"),
        grads.heads.fourier_mag.as_mut().expect("fourier head grad"),
    );
    let d_flat_phase = linear_vec_backward(
        flat.view(),
        flat_view(d_phase).view(),
        params.heads.fourier_phase.as_ref().expect("fourier head"),
        grads.heads.fourier_phase.as_mut().expect("fourier head grad"),
    );
    let d_flat = d_flat_mag + d_flat_phase;
    let mut d_repr = Array2::zeros(repr.raw_dim());
    let rows = repr.nrows() - 1;
    d_repr.slice_mut(s![1.., ..]).assign(&d_flat.into_shape_with_order((rows, repr.ncols())).expect("patch rows"));
    d_repr
}

pub fn head_classify(class_repr: ArrayView1<'_, f64>, params: &ParamStore) -> Result<Array1<f64>> {
    Ok(linear_vec(class_repr, require(params.heads.classify.as_ref(), "classification")?))
}

pub fn head_regress(class_repr: ArrayView1<'_, f64>, params: &ParamStore) -> Result<Array1<f64>> {
    Ok(linear_vec(class_repr, require(params.heads.regress.as_ref(), "regression")?))
}

/// Gradient of the downstream head (classification if present, else
/// regression) given `∂loss/∂output`; returns `dR` with only row 0 set.
pub fn head_backward(
    repr: ArrayView2<'_, f64>,
    d_out: ArrayView1<'_, f64>,
    params: &ParamStore,
    grads: &mut ParamStore,
) -> Array2<f64> {
    let (head, ghead) = match (params.heads.classify.as_ref(), grads.heads.classify.as_mut()) {
        (Some(h), Some(g)) => (h, g),
        _ => (
            params.heads.regress.as_ref().expect("downstream head"),
            grads.heads.regress.as_mut().expect("downstream head grad"),
        ),
    };
    let dr = linear_vec_backward(repr.row(0), d_out, head, ghead);
    let mut d_repr = Array2::zeros(repr.raw_dim());
    d_repr.row_mut(0).assign(&dr);
    d_repr
}
