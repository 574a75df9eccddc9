//! Reasoning pruning: drop paths that sit in the low-probability mode.
//!
//! A path is kept when its posterior under the high Weibull component is at
//! least one half, or when its probability is at least the batch mean
//! (truncated-mean guard). Without a usable fit only the guard applies. The
//! maximum always clears the guard, so the retained set is never empty.

mod mixture;
mod weibull;

use serde::Serialize;

pub use mixture::{fit_mixture, p_high, FitConfig, MixtureFit, SHAPE_MAX, SHAPE_MIN};
pub use weibull::{weibull_pdf, WeibullParams};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct PruningReport {
    pub fit: Option<MixtureFit>,
    pub retained_indices: Vec<usize>,
    pub removed_indices: Vec<usize>,
    pub fallback_used: bool,
    pub mean_threshold: f64,
}

/// Split `probs` (one per unique path) into retained and removed indices.
pub fn prune(probs: &[f64], config: &FitConfig) -> Result<PruningReport> {
    if probs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can lift the mean of equal values above all of them.
    let threshold = mean.min(max);

    let fit = match fit_mixture(probs, config) {
        Ok(fit) => Some(fit),
        Err(Error::FitDegenerate(reason)) => {
            log::debug!("mixture fit degenerate, mean rule only: {reason}");
            None
        }
        Err(e) => return Err(e),
    };

    let mut retained = Vec::new();
    let mut removed = Vec::new();
    for (i, &p) in probs.iter().enumerate() {
        let high = match &fit {
            Some(f) if p > 0.0 => p_high(p, f)? >= 0.5,
            _ => false,
        };
        if high || p >= threshold {
            retained.push(i);
        } else {
            removed.push(i);
        }
    }
    Ok(PruningReport {
        fallback_used: fit.is_none(),
        fit,
        retained_indices: retained,
        removed_indices: removed,
        mean_threshold: threshold,
    })
}
