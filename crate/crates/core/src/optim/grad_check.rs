use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::rng;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference half step. Around 1e-5 balances truncation
    /// (O(h²)) against roundoff (O(ε/h)) for O(1) losses.
    pub step_size: f64,
    /// Coordinates checked per tensor; `None` checks every coordinate.
    pub max_coords_per_tensor: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { step_size: 1e-5, max_coords_per_tensor: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    /// Names of tensors whose worst relative error exceeds `tol`.
    pub fn flagged(&self, tol: f64) -> Vec<&str> {
        self.tensors.iter().filter(|t| t.max_rel_err > tol).map(|t| t.name.as_str()).collect()
    }
}

/// `|a − f| / max(|a|, |f|, 1e-12)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares `analytic` against central differences of `loss` around
/// `params`. `loss` must be deterministic (dropout off).
pub fn grad_check<F>(
    loss: F,
    params: &ParamStore,
    analytic: &ParamStore,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<f64>,
{
    let base = loss(params)?;
    if loss(params)?.to_bits() != base.to_bits() {
        return Err(Error::numeric("loss function is not deterministic"));
    }
    let h = opts.step_size;
    let mut probe = params.clone();
    let names: Vec<(String, usize)> = params.entries().iter().map(|e| (e.name.clone(), e.data.len())).collect();
    let grads: Vec<Vec<f64>> = analytic.entries().iter().map(|e| e.data.to_vec()).collect();
    if grads.len() != names.len() {
        return Err(Error::data("gradient inventory does not match parameters"));
    }

    let mut tensors = Vec::with_capacity(names.len());
    for (t, (name, len)) in names.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_tensor {
            Some(k) if k < *len => {
                let mut r = rng::seeded(opts.seed, t as u64);
                let mut v = index::sample(&mut r, *len, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..*len).collect(),
        };
        let mut check = TensorCheck { name: name.clone(), checked: coords.len(), max_rel_err: 0.0, worst_index: 0 };
        for &i in &coords {
            let orig = params.entries()[t].data[i];
            probe.entries_mut()[t].data[i] = orig + h;
            let up = loss(&probe)?;
            probe.entries_mut()[t].data[i] = orig - h;
            let down = loss(&probe)?;
            probe.entries_mut()[t].data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = rel_err(grads[t][i], numeric);
            if err > check.max_rel_err || err.is_nan() {
                check.max_rel_err = err;
                check.worst_index = i;
            }
        }
        tensors.push(check);
    }
    let worst = tensors
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .cloned()
        .ok_or_else(|| Error::data("no tensors to check"))?;
    Ok(GradCheckReport {
        max_rel_err: worst.max_rel_err,
        worst_tensor: worst.name,
        worst_index: worst.worst_index,
        tensors,
    })
}
