use ndarray::{Array1, Array2, Zip};

use super::linear::LinearIRMModel;
use crate::dataset::{validate_collection, EnvDataset};
use crate::error::{Error, Result};

/// Value and gradient of `Σ_e R_e + λ Σ_e g_e²` at a model.
#[derive(Debug, Clone)]
pub struct Objective {
    /// `Σ_e (1/n_e) Σ_i (f̂(x_i) − y_i)²`.
    pub risk: f64,
    /// `Σ_e g_e²`, `g_e = (2/n_e) Σ_i (f̂(x_i) − y_i) f̂(x_i)`: the derivative
    /// of environment `e`'s risk with respect to a scalar multiplier on `f̂`, at 1.
    pub penalty: f64,
    /// Gradient of `risk + λ·penalty` with respect to `phi`.
    pub gradient: Array2<f64>,
}

impl Objective {
    pub fn total(&self, lambda: f64) -> f64 {
        self.risk + lambda * self.penalty
    }
}

pub fn irm_objective(model: &LinearIRMModel, envs: &[EnvDataset]) -> Result<Objective> {
    if envs.is_empty() {
        return Err(Error::invalid("objective needs at least one environment"));
    }
    let p = validate_collection(envs)?;
    if p != model.input_dim() {
        return Err(Error::invalid(format!(
            "data has {p} features, model expects {}",
            model.input_dim()
        )));
    }
    let (risk, penalty, grad) = objective_in_weights(model.effective_weights(), envs, model.lambda());
    let gradient = broadcast_rows(&grad, model.repr_dim());
    Ok(Objective {
        risk,
        penalty,
        gradient,
    })
}

/// Objective as a function of the effective weights `β = ω·phi`.
///
/// Every entry `phi_jk` enters `f̂` only through `β_k`, so `∂/∂phi_jk = ∂/∂β_k`.
pub(crate) fn objective_in_weights(
    beta: &Array1<f64>,
    envs: &[EnvDataset],
    lambda: f64,
) -> (f64, f64, Array1<f64>) {
    let mut risk = 0.0;
    let mut penalty = 0.0;
    let mut grad = Array1::zeros(beta.len());
    for env in envs {
        let x = env.features();
        let y = env.targets();
        let n = env.len() as f64;
        let f = x.dot(beta);
        let r = &f - y;
        let risk_e = r.dot(&r) / n;
        let g_e = 2.0 * r.dot(&f) / n;
        // ∂R_e/∂β = (2/n) Xᵀr,   ∂g_e/∂β = (2/n) Xᵀ(2f − y)
        let mut coef = r;
        let scale = 2.0 * lambda * g_e;
        Zip::from(&mut coef).and(&f).and(y).for_each(|c, &fi, &yi| {
            *c += scale * (2.0 * fi - yi);
        });
        grad.scaled_add(2.0 / n, &x.t().dot(&coef));
        risk += risk_e;
        penalty += g_e * g_e;
    }
    (risk, penalty, grad)
}

pub(crate) fn broadcast_rows(row: &Array1<f64>, d: usize) -> Array2<f64> {
    let mut out = Array2::zeros((d, row.len()));
    for mut r in out.rows_mut() {
        r.assign(row);
    }
    out
}
