//! The finite-sample conformal quantile.

use crate::error::{Error, Result};

/// Rank `k = ⌈(1 − α)(n + 1)⌉` of the conformal quantile among `n` scores.
///
/// May exceed `n`. The product is nudged down by a relative 1e-12 so that
/// values that are integers in exact arithmetic (e.g. `0.95 · 20`) do not
/// round up past themselves.
pub fn conformal_rank(n: usize, alpha: f64) -> Result<usize> {
    check_alpha(alpha)?;
    let x = (1.0 - alpha) * (n as f64 + 1.0);
    Ok((x - x * 1e-12).ceil() as usize)
}

/// Rejects miscoverage levels outside `(0, 1)`.
pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha = {alpha} is outside (0, 1)")))
    }
}

/// The `k`-th smallest score with `k = ⌈(1 − α)(n + 1)⌉`, or `+∞` when `k > n`.
///
/// Duplicates are retained; scores must be finite and nonnegative.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    check_scores(scores)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    conformal_quantile_sorted(&sorted, alpha)
}

/// [`conformal_quantile`] for scores already sorted ascending.
pub fn conformal_quantile_sorted(sorted: &[f64], alpha: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::invalid("score vector is empty"));
    }
    let k = conformal_rank(sorted.len(), alpha)?;
    Ok(if k > sorted.len() {
        f64::INFINITY
    } else {
        // k ≥ 1 because (1 − α)(n + 1) > 0.
        sorted[k.max(1) - 1]
    })
}

pub(crate) fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid("score vector is empty"));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
        return Err(Error::invalid(format!(
            "conformity scores must be finite and nonnegative, got {bad}"
        )));
    }
    Ok(())
}
