//! Invariance assessment of a fitted representation.
//!
//! For a baseline environment `e` and source environment `e'`,
//! `M̂_e(X^{e'}) = n_{e'}⁻¹ Σ_i f̂(x_i) ρ(x_i)` reweights the source's mean
//! prediction to the baseline covariate distribution, where
//! `ρ = p_e / p_{e'}`. Under invariance every source gives the same value,
//! so the across-source variance, averaged over baselines, is zero.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::dataset::{validate_collection, EnvDataset, EnvId};
use crate::error::{Error, Result};
use crate::models::LinearIRMModel;

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const RATIO_MIN: f64 = 1e-6;
pub const RATIO_MAX: f64 = 1e6;

/// Pointwise covariate likelihood ratio between two environments.
pub trait DensityRatio {
    /// `p_target(x) / p_source(x)`.
    fn ratio(&self, x: ArrayView1<'_, f64>, target: EnvId, source: EnvId) -> Result<f64>;

    /// Bounds applied to the ratio, if any.
    fn bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DiagonalGaussian {
    env_id: EnvId,
    mean: Array1<f64>,
    var: Array1<f64>,
}

impl DiagonalGaussian {
    fn log_density(&self, x: ArrayView1<'_, f64>) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((xi, m), v)| -0.5 * (ln_2pi + v.ln() + (xi - m).powi(2) / v))
            .sum()
    }
}

/// Per-environment diagonal Gaussian fits of the features.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    envs: Vec<DiagonalGaussian>,
}

impl DensityModel {
    pub fn env_ids(&self) -> Vec<EnvId> {
        self.envs.iter().map(|g| g.env_id).collect()
    }

    pub fn mean(&self, env_id: EnvId) -> Result<&Array1<f64>> {
        self.get(env_id).map(|g| &g.mean)
    }

    pub fn variance(&self, env_id: EnvId) -> Result<&Array1<f64>> {
        self.get(env_id).map(|g| &g.var)
    }

    fn get(&self, env_id: EnvId) -> Result<&DiagonalGaussian> {
        self.envs
            .iter()
            .find(|g| g.env_id == env_id)
            .ok_or_else(|| Error::invalid(format!("no density fitted for environment {env_id}")))
    }
}

impl DensityRatio for DensityModel {
    fn ratio(&self, x: ArrayView1<'_, f64>, target: EnvId, source: EnvId) -> Result<f64> {
        likelihood_ratio(self, x, target, source)
    }

    fn bounds(&self) -> Option<(f64, f64)> {
        Some((RATIO_MIN, RATIO_MAX))
    }
}

/// Sample mean and per-coordinate sample variance of each environment's
/// features. Variances below `1e-8` are floored, with a warning.
pub fn fit_density(envs: &[EnvDataset]) -> Result<DensityModel> {
    validate_collection(envs)?;
    let envs = envs
        .iter()
        .map(|env| {
            let n = env.len();
            if n < 2 {
                return Err(Error::invalid(format!(
                    "environment {} needs at least 2 rows for a density fit",
                    env.env_id()
                )));
            }
            let x = env.features();
            let mean = x.mean_axis(ndarray::Axis(0)).expect("n ≥ 2");
            let mut var = x.var_axis(ndarray::Axis(0), 1.0);
            for (j, v) in var.iter_mut().enumerate() {
                if !(*v >= VARIANCE_FLOOR) {
                    log::warn!(
                        "environment {}: feature {} has variance {v:e}; flooring at {VARIANCE_FLOOR:e}",
                        env.env_id(),
                        j + 1
                    );
                    *v = VARIANCE_FLOOR;
                }
            }
            Ok(DiagonalGaussian {
                env_id: env.env_id(),
                mean,
                var,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityModel { envs })
}

/// `p̂_target(x) / p̂_source(x)`, clamped to `[1e-6, 1e6]`; exactly 1 when the
/// environments coincide.
pub fn likelihood_ratio(density: &DensityModel, x: ArrayView1<'_, f64>, target: EnvId, source: EnvId) -> Result<f64> {
    let t = density.get(target)?;
    let s = density.get(source)?;
    if x.len() != t.mean.len() {
        return Err(Error::invalid(format!(
            "point has {} features, density expects {}",
            x.len(),
            t.mean.len()
        )));
    }
    if target == source {
        return Ok(1.0);
    }
    let log_ratio = t.log_density(x) - s.log_density(x);
    Ok(log_ratio.exp().clamp(RATIO_MIN, RATIO_MAX))
}

/// `M̂_baseline(X^{source})`: mean over the source sample of `f̂(x) ρ(x)`.
pub fn m_hat(
    model: &LinearIRMModel,
    ratio: &dyn DensityRatio,
    baseline: EnvId,
    source: EnvId,
    data: &EnvDataset,
) -> Result<f64> {
    if data.env_id() != source {
        return Err(Error::invalid(format!(
            "data belongs to environment {}, not source {source}",
            data.env_id()
        )));
    }
    if data.is_empty() {
        return Err(Error::invalid("m_hat needs a nonempty sample"));
    }
    let pred = model.predict_rows(data.features())?;
    let mut total = 0.0;
    for (i, f) in pred.iter().enumerate() {
        let rho = if baseline == source {
            1.0
        } else {
            ratio.ratio(data.row(i), baseline, source)?
        };
        total += f * rho;
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    /// Environment order of the rows, columns and `delta`.
    pub env_ids: Vec<EnvId>,
    /// Entry `(e, e')` is `M̂_e(X^{e'})`.
    pub m_hat: Array2<f64>,
    /// Mean over baselines of the population variance across all sources,
    /// the baseline itself included.
    pub inv: f64,
    /// `|mean_{i≠e} M̂_e(X^i) − M̂_e(X^e)|` per environment.
    pub delta: Vec<f64>,
    pub ratio_bounds: Option<(f64, f64)>,
}

impl InvarianceReport {
    /// CSV rows `baseline_env,source_env,m_hat`, then `inv,<value>` and one
    /// `delta,<env>,<value>` line per environment.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
        out.write_all(self.to_csv().as_bytes()).map_err(io)?;
        out.flush().map_err(io)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("baseline_env,source_env,m_hat\n");
        for (i, e) in self.env_ids.iter().enumerate() {
            for (j, e2) in self.env_ids.iter().enumerate() {
                s += &format!("{e},{e2},{}\n", self.m_hat[[i, j]]);
            }
        }
        s += &format!("inv,{}\n", self.inv);
        for (e, d) in self.env_ids.iter().zip(&self.delta) {
            s += &format!("delta,{e},{d}\n");
        }
        s
    }
}

/// Fills the `M̂` matrix over `envs` and derives `Inv` and `δ`.
pub fn inv_statistic(model: &LinearIRMModel, ratio: &dyn DensityRatio, envs: &[EnvDataset]) -> Result<InvarianceReport> {
    validate_collection(envs)?;
    let m = envs.len();
    if m < 2 {
        return Err(Error::invalid("invariance statistic needs at least 2 environments"));
    }
    let env_ids: Vec<EnvId> = envs.iter().map(EnvDataset::env_id).collect();
    let mut mat = Array2::zeros((m, m));
    for (i, &baseline) in env_ids.iter().enumerate() {
        for (j, data) in envs.iter().enumerate() {
            mat[[i, j]] = m_hat(model, ratio, baseline, data.env_id(), data)?;
        }
    }
    let mut inv = 0.0;
    let mut delta = Vec::with_capacity(m);
    for (i, row) in mat.rows().into_iter().enumerate() {
        // Work with differences from the diagonal entry so that equal
        // entries give exactly zero.
        let diff: Vec<f64> = row.iter().map(|v| v - row[i]).collect();
        let mean = diff.iter().sum::<f64>() / m as f64;
        inv += diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
        let others = diff.iter().sum::<f64>() / (m - 1) as f64;
        delta.push(others.abs());
    }
    Ok(InvarianceReport {
        env_ids,
        m_hat: mat,
        inv: inv / m as f64,
        delta,
        ratio_bounds: ratio.bounds(),
    })
}
