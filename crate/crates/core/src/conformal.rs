//! Conformal calibration and interval construction.
//!
//! Calibration stores, per environment, the sorted absolute residuals of the
//! fitted predictor together with two summaries of the representation: the
//! average over samples of the coordinate mean `μ(Φ̂(x))` and of the
//! coordinate standard deviation `V(Φ̂(x))`.
//!
//! Two intervals are built from that state:
//!
//! - split conformal (SC): one pooled quantile over every environment's scores;
//! - adaptive (ACIR): per-environment quantiles mixed with weights
//!   `w_e ∝ exp(−|V(x) − V^e|) · exp(−|μ(x) − μ^e|)`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView1;

use crate::dataset::{validate_collection, EnvDataset, EnvId};
use crate::error::{Error, Result};
use crate::interval::PredictionInterval;
use crate::models::LinearIRMModel;
use crate::quantile::{check_scores, conformal_quantile_sorted};

/// Calibration summary of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvCalibration {
    env_id: EnvId,
    scores: Vec<f64>,
    mu: f64,
    v: f64,
}

impl EnvCalibration {
    /// Sorts `scores`; they must be finite and nonnegative.
    pub fn new(env_id: EnvId, mut scores: Vec<f64>, mu: f64, v: f64) -> Result<Self> {
        check_scores(&scores)
            .map_err(|e| Error::invalid(format!("environment {env_id}: {e}")))?;
        if !mu.is_finite() || !(v.is_finite() && v >= 0.0) {
            return Err(Error::invalid(format!(
                "environment {env_id}: moments (mu={mu}, v={v}) must be finite with v ≥ 0"
            )));
        }
        scores.sort_by(f64::total_cmp);
        Ok(Self { env_id, scores, mu, v })
    }

    pub fn env_id(&self) -> EnvId {
        self.env_id
    }

    /// Conformity scores, ascending.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        conformal_quantile_sorted(&self.scores, alpha)
    }
}

/// Everything needed to build intervals at new points.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    model: LinearIRMModel,
    envs: Vec<EnvCalibration>,
    pooled: Vec<f64>,
}

impl CalibrationState {
    pub fn from_parts(model: LinearIRMModel, envs: Vec<EnvCalibration>) -> Result<Self> {
        if envs.is_empty() {
            return Err(Error::invalid("calibration state needs at least one environment"));
        }
        let mut ids: Vec<EnvId> = envs.iter().map(EnvCalibration::env_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate environment in calibration state"));
        }
        let mut pooled: Vec<f64> = envs.iter().flat_map(|e| e.scores.iter().copied()).collect();
        pooled.sort_by(f64::total_cmp);
        Ok(Self { model, envs, pooled })
    }

    pub fn model(&self) -> &LinearIRMModel {
        &self.model
    }

    pub fn envs(&self) -> &[EnvCalibration] {
        &self.envs
    }

    pub fn env(&self, env_id: EnvId) -> Result<&EnvCalibration> {
        self.envs
            .iter()
            .find(|e| e.env_id == env_id)
            .ok_or_else(|| Error::invalid(format!("environment {env_id} is not calibrated")))
    }

    /// All environments' scores merged, ascending.
    pub fn pooled_scores(&self) -> &[f64] {
        &self.pooled
    }

    pub fn num_envs(&self) -> usize {
        self.envs.len()
    }

    /// Text form: per environment a line `env m n_cal mu v`, then its sorted
    /// scores one per line. `m` is the number of environments in the state.
    pub fn to_text(&self) -> String {
        let m = self.envs.len();
        let mut s = String::new();
        for e in &self.envs {
            let _ = writeln!(s, "{} {m} {} {} {}", e.env_id, e.scores.len(), e.mu, e.v);
            for score in &e.scores {
                let _ = writeln!(s, "{score}");
            }
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output; scores must already be sorted.
    pub fn from_text(text: &str, model: LinearIRMModel, source_name: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let mut envs = Vec::new();
        let mut declared_m = None;
        while let Some((hline, header)) = lines.next() {
            let f: Vec<&str> = header.split_whitespace().collect();
            if f.len() != 5 {
                return Err(Error::parse(source_name, hline, "section header must be `env m n_cal mu v`"));
            }
            let bad = |what: &str, v: &str| Error::parse(source_name, hline, format!("{what} `{v}` is invalid"));
            let env_id: EnvId = f[0].parse().map_err(|_| bad("env", f[0]))?;
            let m: usize = f[1].parse().map_err(|_| bad("m", f[1]))?;
            let n_cal: usize = f[2].parse().map_err(|_| bad("n_cal", f[2]))?;
            let mu: f64 = f[3].parse().map_err(|_| bad("mu", f[3]))?;
            let v: f64 = f[4].parse().map_err(|_| bad("v", f[4]))?;
            if *declared_m.get_or_insert(m) != m {
                return Err(Error::parse(source_name, hline, "inconsistent environment count"));
            }
            if n_cal == 0 {
                return Err(Error::parse(source_name, hline, "n_cal must be ≥ 1"));
            }
            let mut scores = Vec::with_capacity(n_cal);
            for _ in 0..n_cal {
                let (line, l) = lines.next().ok_or_else(|| {
                    Error::parse(source_name, hline, format!("environment {env_id}: expected {n_cal} scores"))
                })?;
                let score: f64 = l
                    .parse()
                    .map_err(|_| Error::parse(source_name, line, format!("score `{l}` is not a number")))?;
                if !(score.is_finite() && score >= 0.0) {
                    return Err(Error::parse(source_name, line, "scores must be finite and nonnegative"));
                }
                if scores.last().is_some_and(|&prev| score < prev) {
                    return Err(Error::parse(source_name, line, "scores are not sorted ascending"));
                }
                scores.push(score);
            }
            envs.push(
                EnvCalibration::new(env_id, scores, mu, v)
                    .map_err(|e| Error::parse(source_name, hline, e.to_string()))?,
            );
        }
        if declared_m.is_some_and(|m| m != envs.len()) {
            return Err(Error::parse(
                source_name,
                1,
                format!("declared {} environments, found {}", declared_m.unwrap(), envs.len()),
            ));
        }
        Self::from_parts(model, envs)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, model: LinearIRMModel) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, model, &path.display().to_string())
    }
}

/// Scores each calibration environment with `model`.
pub fn calibrate(model: &LinearIRMModel, cal: &[EnvDataset]) -> Result<CalibrationState> {
    let p = validate_collection(cal)?;
    if p != model.input_dim() {
        return Err(Error::invalid(format!(
            "calibration data has {p} features, model expects {}",
            model.input_dim()
        )));
    }
    let envs = cal
        .iter()
        .map(|env| {
            let pred = model.predict_rows(env.features())?;
            let scores: Vec<f64> = pred
                .iter()
                .zip(env.targets())
                .map(|(f, y)| (y - f).abs())
                .collect();
            let reps = model.represent_rows(env.features())?;
            let (mut mu_sum, mut v_sum) = (0.0, 0.0);
            for rep in reps.rows() {
                let (mu, v) = moment_stats(rep)?;
                mu_sum += mu;
                v_sum += v;
            }
            let n = env.len() as f64;
            EnvCalibration::new(env.env_id(), scores, mu_sum / n, v_sum / n)
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationState::from_parts(model.clone(), envs)
}

/// Coordinate mean and population standard deviation of a representation.
pub fn moment_stats(representation: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    let d = representation.len();
    if d < 2 {
        return Err(Error::invalid(format!(
            "moment statistics need a representation of dimension ≥ 2, got {d}"
        )));
    }
    let mu = representation.sum() / d as f64;
    let var = representation.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / d as f64;
    Ok((mu, var.sqrt()))
}

/// `|V(x) − V^e| + |μ(x) − μ^e|`, the negative log-similarity.
fn moment_distance(stats: (f64, f64), env: &EnvCalibration) -> f64 {
    (stats.1 - env.v).abs() + (stats.0 - env.mu).abs()
}

fn point_stats(state: &CalibrationState, x: ArrayView1<'_, f64>) -> Result<(f64, f64)> {
    moment_stats(state.model.represent(x)?.view())
}

/// Similarity `τ(x, e) = exp(−|V(x) − V^e|) · exp(−|μ(x) − μ^e|)`.
pub fn similarity(x: ArrayView1<'_, f64>, env_id: EnvId, state: &CalibrationState) -> Result<f64> {
    let env = state.env(env_id)?;
    Ok((-moment_distance(point_stats(state, x)?, env)).exp())
}

/// `τ(x, e) / Σ_e' τ(x, e')`, in the state's environment order.
///
/// Evaluated relative to the most similar environment so that points far
/// from every environment do not underflow to `0/0`.
pub fn environment_weights(x: ArrayView1<'_, f64>, state: &CalibrationState) -> Result<Vec<f64>> {
    let stats = point_stats(state, x)?;
    Ok(weights_from_stats(stats, state))
}

fn weights_from_stats(stats: (f64, f64), state: &CalibrationState) -> Vec<f64> {
    let dist: Vec<f64> = state.envs.iter().map(|e| moment_distance(stats, e)).collect();
    let nearest = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = dist.iter().map(|d| (nearest - d).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|wi| *wi /= total);
    w
}

/// `Σ_e Q̂^e · w_e`, with `Q̂^e` the environment's conformal quantile.
/// Infinite if any environment carrying weight has an infinite quantile.
pub fn weighted_quantile(x: ArrayView1<'_, f64>, state: &CalibrationState, alpha: f64) -> Result<f64> {
    let w = environment_weights(x, state)?;
    combine_quantiles(state, &w, alpha)
}

fn combine_quantiles(state: &CalibrationState, weights: &[f64], alpha: f64) -> Result<f64> {
    let mut total = 0.0;
    for (env, &w) in state.envs.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let q = env.quantile(alpha)?;
        if q.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += q * w;
    }
    Ok(total)
}

/// Pooled split-conformal interval.
pub fn sc_interval(state: &CalibrationState, x: ArrayView1<'_, f64>, alpha: f64) -> Result<PredictionInterval> {
    let center = state.model.predict(x)?;
    let half_width = conformal_quantile_sorted(&state.pooled, alpha)?;
    PredictionInterval::new(center, half_width)
}

/// Adaptive interval `f̂(x) ± Q̃(x)`, optionally widened by `Σ_e w_e δ^e`.
pub fn acir_interval(
    state: &CalibrationState,
    x: ArrayView1<'_, f64>,
    alpha: f64,
    delta_inflation: Option<&[f64]>,
) -> Result<PredictionInterval> {
    if let Some(delta) = delta_inflation {
        if delta.len() != state.num_envs() {
            return Err(Error::invalid(format!(
                "δ has {} entries for {} environments",
                delta.len(),
                state.num_envs()
            )));
        }
        if delta.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::invalid("δ entries must be finite and nonnegative"));
        }
    }
    let center = state.model.predict(x)?;
    let w = environment_weights(x, state)?;
    let mut half_width = combine_quantiles(state, &w, alpha)?;
    if let Some(delta) = delta_inflation {
        half_width += w.iter().zip(delta).map(|(w, d)| w * d).sum::<f64>();
    }
    PredictionInterval::new(center, half_width)
}
