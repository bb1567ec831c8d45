//! Spectral reconstruction export for one masked record.
//!
//! Files written: `channel_{c}.csv` (`t,original,reconstructed`, one row per
//! padded sample), `spectrum_{c}.csv` (`bin,true_mag,pred_mag,true_phase,
//! pred_phase`, one row per half-spectrum bin), `summary.json`, and with
//! `svg` set, `reconstruction.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{PolarSpectrum, SynthesisPlan};
use crate::model::{decode_fourier, load_checkpoint, sample_mask, EncoderTrace};
use crate::pipeline::{prepare, TargetMode};
use crate::rng;
use crate::signal_io::load_dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub index: usize,
    pub mask_seed: u64,
    /// Falls back to the checkpoint's pretraining ratio.
    pub mask_ratio: Option<f64>,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructSummary {
    pub index: usize,
    pub target_mode: TargetMode,
    pub mask_seed: u64,
    pub mask_ratio: f64,
    pub masked_patches: usize,
    pub masked_indices: Vec<usize>,
    /// Mean squared time-domain error over the padded record.
    pub mse: f64,
    /// Mean square of the standardized, padded record.
    pub signal_energy: f64,
}

struct Export {
    original: Array2<f64>,
    reconstructed: Array2<f64>,
    truth: PolarSpectrum,
    pred: PolarSpectrum,
    sample_rate_hz: f64,
}

/// Runs the encoder on record `opts.index` under a mask drawn from
/// `opts.mask_seed` and writes the export bundle to `out`.
pub fn reconstruct(
    checkpoint: &Path,
    data: &Path,
    opts: &ReconstructOptions,
    out: &Path,
) -> Result<ReconstructSummary> {
    let ckpt = load_checkpoint(checkpoint)?;
    let mode: TargetMode = ckpt
        .training
        .get("target_mode")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .ok_or_else(|| Error::data("checkpoint does not record a pretraining target mode"))?;
    if !mode.is_spectral() || !ckpt.params.head_spec().fourier {
        return Err(Error::data(format!("reconstruction needs a fourier or inv_fourier checkpoint, found {mode}")));
    }
    let mask_ratio = match opts.mask_ratio {
        Some(r) => r,
        None => ckpt
            .training
            .get("mask_ratio")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| Error::config("mask_ratio", "not recorded in the checkpoint; pass --mask-ratio"))?,
    };
    let dataset = load_dataset(data)?;
    if opts.index >= dataset.len() {
        return Err(Error::config("index", format!("{} is out of range for {} records", opts.index, dataset.len())));
    }
    let params = &ckpt.params;
    let cfg = &params.config;
    let record = dataset.select(&[opts.index]);
    let ex = prepare(&record, cfg, true)?.pop().expect("one record");
    let plan = sample_mask(cfg.num_patches(), mask_ratio, &mut rng::seeded(opts.mask_seed, opts.index as u64))
        .map_err(|e| match e {
            Error::Config { reason, .. } => Error::config("mask_ratio", reason),
            other => other,
        })?;
    let trace = EncoderTrace::forward(params, ex.input.view(), &plan, None)?;
    let pred = decode_fourier(trace.output.view(), params)?.polar;
    let re = &pred.magnitude * &pred.phase.mapv(f64::cos);
    let im = &pred.magnitude * &pred.phase.mapv(f64::sin);
    let reconstructed = SynthesisPlan::new(cfg.padded_len()).synthesize(re.view(), im.view());
    let original = ex.input;
    let n = original.len() as f64;
    let summary = ReconstructSummary {
        index: opts.index,
        target_mode: mode,
        mask_seed: opts.mask_seed,
        mask_ratio,
        masked_patches: plan.len(),
        masked_indices: plan.indices().to_vec(),
        mse: (&reconstructed - &original).iter().map(|v| v * v).sum::<f64>() / n,
        signal_energy: original.iter().map(|v| v * v).sum::<f64>() / n,
    };
    let export = Export {
        original,
        reconstructed,
        truth: ex.spectrum.expect("prepared with spectrum"),
        pred,
        sample_rate_hz: dataset.sample_rate_hz(),
    };
    write_bundle(out, &export, &summary, opts.svg)?;
    Ok(summary)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_bundle(out: &Path, ex: &Export, summary: &ReconstructSummary, svg: bool) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for c in 0..ex.original.ncols() {
        let mut csv = String::from("t,original,reconstructed\n");
        for (i, (o, r)) in ex.original.column(c).iter().zip(ex.reconstructed.column(c)).enumerate() {
            let _ = writeln!(csv, "{},{o},{r}", i as f64 / ex.sample_rate_hz);
        }
        write(&out.join(format!("channel_{c}.csv")), &csv)?;

        let mut csv = String::from("bin,true_mag,pred_mag,true_phase,pred_phase\n");
        for k in 0..ex.truth.magnitude.nrows() {
            let _ = writeln!(
                csv,
                "{k},{},{},{},{}",
                ex.truth.magnitude[[k, c]],
                ex.pred.magnitude[[k, c]],
                ex.truth.phase[[k, c]],
                ex.pred.phase[[k, c]]
            );
        }
        write(&out.join(format!("spectrum_{c}.csv")), &csv)?;
    }
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    write(&out.join("summary.json"), &json)?;
    if svg {
        write(&out.join("reconstruction.svg"), &render_svg(ex))?;
    }
    Ok(())
}

/// One panel per channel with the original (blue) and reconstructed
/// (orange) traces, each panel scaled to its own peak.
fn render_svg(ex: &Export) -> String {
    const W: f64 = 800.0;
    const H: f64 = 140.0;
    const PAD: f64 = 10.0;
    let (n, c) = ex.original.dim();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{}" viewBox="0 0 {W} {}">"#,
        H * c as f64,
        H * c as f64
    );
    for ch in 0..c {
        let top = H * ch as f64;
        let peak =
            ex.original.column(ch).iter().chain(ex.reconstructed.column(ch)).fold(1e-12_f64, |m, v| m.max(v.abs()));
        let _ = writeln!(s, r##"<rect x="0" y="{top}" width="{W}" height="{H}" fill="none" stroke="#ccc"/>"##);
        for (series, colour) in [(&ex.original, "#1f77b4"), (&ex.reconstructed, "#ff7f0e")] {
            let points: Vec<String> = series
                .column(ch)
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = PAD + (W - 2.0 * PAD) * i as f64 / (n.max(2) - 1) as f64;
                    let y = top + H / 2.0 - (H / 2.0 - PAD) * v / peak;
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
                points.join(" ")
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
