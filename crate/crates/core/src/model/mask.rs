use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Patch indices replaced by the mask token for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    masked: Vec<usize>,
    ratio: f64,
}

impl MaskPlan {
    pub fn none() -> Self {
        MaskPlan { masked: Vec::new(), ratio: 0.0 }
    }

    /// Plan from explicit indices; they are sorted and must be unique and `< num_patches`.
    pub fn from_indices(mut indices: Vec<usize>, num_patches: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data("mask indices must be unique"));
        }
        if indices.last().is_some_and(|&i| i >= num_patches) {
            return Err(Error::data(format!("mask index out of range for {num_patches} patches")));
        }
        let ratio = if num_patches == 0 { 0.0 } else { indices.len() as f64 / num_patches as f64 };
        Ok(MaskPlan { masked: indices, ratio })
    }

    pub fn indices(&self) -> &[usize] {
        &self.masked
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn contains(&self, patch: usize) -> bool {
        self.masked.binary_search(&patch).is_ok()
    }
}

/// Number of patches masked at ratio `r`: 0 for `r = 0`, else `max(1, round(r·L))`.
pub fn mask_count(num_patches: usize, ratio: f64) -> usize {
    if ratio <= 0.0 || num_patches == 0 {
        0
    } else {
        ((ratio * num_patches as f64).round() as usize).clamp(1, num_patches)
    }
}

/// Uniform draw of `mask_count(L, r)` distinct patches.
pub fn sample_mask(num_patches: usize, ratio: f64, rng: &mut impl Rng) -> Result<MaskPlan> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::config("mask_ratio", "must lie in [0, 1]"));
    }
    let k = mask_count(num_patches, ratio);
    let mut masked = index::sample(rng, num_patches, k).into_vec();
    masked.sort_unstable();
    Ok(MaskPlan { masked, ratio })
}
