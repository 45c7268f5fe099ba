//! Numerically stable scalar reductions.

use crate::error::{CoreError, Result};

/// log Σ exp(vᵢ) computed with a max shift; exact for the maximum element.
///
/// Entries may be `-inf` (they drop out). Returns `-inf` when every entry is
/// `-inf`. An empty input is an error.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptyReduction);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Mean of a slice; error on empty input.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::EmptyReduction);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Order statistics (min, q25, median, q75, max) of a score vector.
pub fn five_point_summary(values: &[f64]) -> Result<[f64; 5]> {
    if values.is_empty() {
        return Err(CoreError::EmptyReduction);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in summary input"));
    let q = |p: f64| -> f64 {
        let idx = (p * (sorted.len() - 1) as f64).round() as usize;
        sorted[idx]
    };
    Ok([sorted[0], q(0.25), q(0.5), q(0.75), sorted[sorted.len() - 1]])
}
