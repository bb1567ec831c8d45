//! Per-example objectives with hand-written backward passes.

use ndarray::{s, Array1, Array2, ArrayView1};

use super::TargetMode;
use crate::error::{Error, Result};
use crate::fourier::{rdft, to_polar, PolarSpectrum, SynthesisPlan};
use crate::model::{
    decode_fourier, decode_fourier_backward, decode_spatiotemporal, decode_spatiotemporal_backward, head_backward,
    head_classify, head_regress, pad_signal, Dropout, EncoderTrace, MaskPlan, ModelConfig, ParamStore,
};
use crate::signal_io::{standardize, Dataset, Label};

/// A standardized, zero-padded record ready for the encoder.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// `[L·P × C]`.
    pub input: Array2<f64>,
    /// Polar half spectrum of `input`; present when prepared for a
    /// spectral target.
    pub spectrum: Option<PolarSpectrum>,
    pub label: Label,
}

/// Standardizes and pads every record; checks the dataset shape against
/// `cfg`.
pub fn prepare(dataset: &Dataset, cfg: &ModelConfig, with_spectrum: bool) -> Result<Vec<Prepared>> {
    check_shape(dataset, cfg)?;
    Ok(dataset
        .records()
        .iter()
        .map(|r| {
            let input = pad_signal(standardize(r.samples.view()).view(), cfg.padded_len());
            let spectrum = with_spectrum.then(|| to_polar(&rdft(input.view())));
            Prepared { input, spectrum, label: r.label.clone() }
        })
        .collect())
}

pub fn check_shape(dataset: &Dataset, cfg: &ModelConfig) -> Result<()> {
    match dataset.shape() {
        Some((n, c)) if n == cfg.seq_len && c == cfg.in_channels => Ok(()),
        Some((n, c)) => Err(Error::data(format!(
            "dataset `{}` has records [{n} × {c}], model expects [{} × {}]",
            dataset.name(),
            cfg.seq_len,
            cfg.in_channels
        ))),
        None => Err(Error::data(format!("dataset `{}` is empty", dataset.name()))),
    }
}

/// Pretraining objective and the transforms it needs.
#[derive(Debug, Clone)]
pub struct PretrainObjective {
    pub mode: TargetMode,
    pub phase_weight: f64,
    synthesis: SynthesisPlan,
}

impl PretrainObjective {
    pub fn new(mode: TargetMode, phase_weight: f64, cfg: &ModelConfig) -> Self {
        PretrainObjective { mode, phase_weight, synthesis: SynthesisPlan::new(cfg.padded_len()) }
    }

    /// Loss of one example; when `grads` is given, accumulates the gradient.
    pub fn example(
        &self,
        params: &ParamStore,
        ex: &Prepared,
        plan: &MaskPlan,
        dropout: Option<Dropout<'_>>,
        mut grads: Option<&mut ParamStore>,
    ) -> Result<f64> {
        let trace = EncoderTrace::forward(params, ex.input.view(), plan, dropout)?;
        let repr = trace.output.view();
        let (loss, d_repr) = match self.mode {
            TargetMode::Spatiotemporal => {
                let preds = decode_spatiotemporal(repr, plan, params)?;
                let p = params.config.patch_size;
                let n = (preds.len() * p * ex.input.ncols()) as f64;
                let diffs: Vec<Array2<f64>> = plan
                    .indices()
                    .iter()
                    .zip(&preds)
                    .map(|(&i, pred)| pred - &ex.input.slice(s![i * p..(i + 1) * p, ..]))
                    .collect();
                let loss = diffs.iter().flat_map(|d| d.iter()).map(|v| v * v).sum::<f64>() / n;
                let d_repr = grads.as_deref_mut().map(|g| {
                    let d_patches: Vec<Array2<f64>> = diffs.iter().map(|d| d.mapv(|v| 2.0 * v / n)).collect();
                    decode_spatiotemporal_backward(repr, plan, &d_patches, params, g)
                });
                (loss, d_repr)
            }
            TargetMode::Fourier => {
                let target = spectrum(ex)?;
                let out = decode_fourier(repr, params)?;
                let n = out.polar.magnitude.len() as f64;
                let dm = &out.polar.magnitude - &target.magnitude;
                let dp = &out.polar.phase - &target.phase;
                let loss = dm.iter().map(|v| v * v).sum::<f64>() / n
                    + self.phase_weight * dp.iter().map(|v| v * v).sum::<f64>() / n;
                let d_repr = grads.as_deref_mut().map(|g| {
                    let d_mag = dm.mapv(|v| 2.0 * v / n);
                    let d_phase = dp.mapv(|v| 2.0 * self.phase_weight * v / n);
                    decode_fourier_backward(repr, &out, &d_mag, &d_phase, params, g)
                });
                (loss, d_repr)
            }
            TargetMode::InvFourier => {
                let out = decode_fourier(repr, params)?;
                let (mag, phase) = (&out.polar.magnitude, &out.polar.phase);
                let (cos, sin) = (phase.mapv(f64::cos), phase.mapv(f64::sin));
                let re = mag * &cos;
                let im = mag * &sin;
                let diff = self.synthesis.synthesize(re.view(), im.view()) - &ex.input;
                let n = diff.len() as f64;
                let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
                let d_repr = grads.as_deref_mut().map(|g| {
                    let dx = diff.mapv(|v| 2.0 * v / n);
                    let (d_re, d_im) = self.synthesis.adjoint(dx.view());
                    let d_mag = &d_re * &cos + &d_im * &sin;
                    let d_phase = (&d_im * &cos - &d_re * &sin) * mag;
                    decode_fourier_backward(repr, &out, &d_mag, &d_phase, params, g)
                });
                (loss, d_repr)
            }
        };
        if let (Some(dr), Some(g)) = (d_repr, grads) {
            trace.backward(params, dr, g);
        }
        finite(loss)
    }

    /// Mean loss over a batch without dropout.
    pub fn batch(&self, params: &ParamStore, batch: &[Prepared], plans: &[MaskPlan]) -> Result<f64> {
        if batch.len() != plans.len() || batch.is_empty() {
            return Err(Error::data("batch and mask plans must be non-empty and of equal length"));
        }
        let mut total = 0.0;
        for (ex, plan) in batch.iter().zip(plans) {
            total += self.example(params, ex, plan, None, None)?;
        }
        Ok(total / batch.len() as f64)
    }
}

fn spectrum(ex: &Prepared) -> Result<&PolarSpectrum> {
    ex.spectrum.as_ref().ok_or_else(|| Error::data("record was prepared without a spectral target"))
}

fn finite(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::numeric("non-finite loss"))
    }
}

/// Mean masked-patch squared error.
pub fn loss_spatiotemporal(params: &ParamStore, batch: &[Prepared], plans: &[MaskPlan]) -> Result<f64> {
    PretrainObjective::new(TargetMode::Spatiotemporal, 1.0, &params.config).batch(params, batch, plans)
}

/// Magnitude MSE plus phase MSE against the original signal's spectrum.
pub fn loss_fourier(params: &ParamStore, batch: &[Prepared], plans: &[MaskPlan]) -> Result<f64> {
    PretrainObjective::new(TargetMode::Fourier, 1.0, &params.config).batch(params, batch, plans)
}

/// Time-domain MSE of the inverse transform of the predicted spectrum.
pub fn loss_inv_fourier(params: &ParamStore, batch: &[Prepared], plans: &[MaskPlan]) -> Result<f64> {
    PretrainObjective::new(TargetMode::InvFourier, 1.0, &params.config).batch(params, batch, plans)
}

/// Numerically stable softmax of one logit vector.
pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

/// Supervised loss on the class-token representation: cross-entropy for
/// class labels, MSE for targets.
pub fn downstream_example(
    params: &ParamStore,
    ex: &Prepared,
    dropout: Option<Dropout<'_>>,
    grads: Option<&mut ParamStore>,
) -> Result<f64> {
    let trace = EncoderTrace::forward(params, ex.input.view(), &MaskPlan::none(), dropout)?;
    let repr = trace.output.view();
    let (loss, d_out) = match &ex.label {
        Label::Class(y) => {
            let logits = head_classify(repr.row(0), params)?;
            if *y >= logits.len() {
                return Err(Error::data(format!("class {y} exceeds head width {}", logits.len())));
            }
            let mut p = softmax(logits.view());
            let loss = -p[*y].max(f64::MIN_POSITIVE).ln();
            p[*y] -= 1.0;
            (loss, p)
        }
        Label::Target(t) => {
            let pred = head_regress(repr.row(0), params)?;
            if t.len() != pred.len() {
                return Err(Error::data(format!("target dim {} differs from head width {}", t.len(), pred.len())));
            }
            let diff = &pred - &ArrayView1::from(t.as_slice());
            let n = diff.len() as f64;
            (diff.iter().map(|v| v * v).sum::<f64>() / n, diff.mapv(|v| 2.0 * v / n))
        }
    };
    if let Some(g) = grads {
        let dr = head_backward(repr, d_out.view(), params, g);
        trace.backward(params, dr, g);
    }
    finite(loss)
}
