//! Interval evaluation metrics.

use crate::error::{Error, Result};
use crate::interval::PredictionInterval;

/// Fraction of `truths` lying inside their interval.
pub fn coverage_rate(intervals: &[PredictionInterval], truths: &[f64]) -> Result<f64> {
    if intervals.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} intervals but {} truths",
            intervals.len(),
            truths.len()
        )));
    }
    if intervals.is_empty() {
        return Err(Error::invalid("no intervals to score"));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|(iv, &y)| iv.contains(y))
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

/// Mean half-width. Reported as the half-width, not the full width `2·Q̃`.
pub fn average_length(intervals: &[PredictionInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return Err(Error::invalid("no intervals to average"));
    }
    if intervals.iter().any(PredictionInterval::is_unbounded) {
        return Ok(f64::INFINITY);
    }
    let total: f64 = intervals.iter().map(PredictionInterval::half_width).sum();
    Ok(total / intervals.len() as f64)
}
