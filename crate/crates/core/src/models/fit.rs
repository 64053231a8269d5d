use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::linear::LinearIRMModel;
use super::objective::{broadcast_rows, objective_in_weights};
use super::optim::{self, Method, StopReason};
use crate::dataset::{validate_collection, EnvDataset};
use crate::error::Result;
use crate::seeding::rng_from;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Steepest descent with backtracking.
    GradientDescent,
    /// Limited-memory BFGS with backtracking.
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// First trial step of the line search.
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm (over `phi`) falls below this.
    pub tolerance: f64,
    /// Stop once a step lowers the objective by no more than this fraction
    /// of its magnitude. At `0` only steps that make no progress at all stop
    /// the fit.
    pub f_tolerance: f64,
    pub lambda: f64,
    /// Iterations run with `λ = 0` before the penalty is switched on.
    pub warmup_iters: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization of `phi`.
    pub init_std: f64,
    /// Representation dimension `d`; `None` uses `max(p, 2)`.
    pub repr_dim: Option<usize>,
    pub optimizer: Optimizer,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_iters: 5000,
            tolerance: 1e-6,
            f_tolerance: 0.0,
            lambda: 1e4,
            warmup_iters: 100,
            seed: 0,
            init_std: 0.1,
            repr_dim: None,
            optimizer: Optimizer::Lbfgs { memory: 10 },
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        use crate::error::Error;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(self.f_tolerance >= 0.0 && self.f_tolerance < 1.0) {
            return Err(Error::invalid("f_tolerance must be in [0, 1)"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be finite and ≥ 0"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid("init_std must be finite and ≥ 0"));
        }
        if let Optimizer::Lbfgs { memory: 0 } = self.optimizer {
            return Err(Error::invalid("L-BFGS memory must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub model: LinearIRMModel,
    /// Objective (with the configured `λ`) at the initialization.
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective after each accepted step of the penalized phase.
    pub trace: Vec<f64>,
}

/// IRMv1 with the configured penalty weight.
pub fn fit_irmv1(train: &[EnvDataset], config: &FitConfig) -> Result<LinearIRMModel> {
    fit_with_report(train, config).map(|r| r.model)
}

/// Pooled empirical risk minimization: [`fit_irmv1`] with `λ = 0`.
pub fn fit_erm(train: &[EnvDataset], config: &FitConfig) -> Result<LinearIRMModel> {
    let config = FitConfig {
        lambda: 0.0,
        warmup_iters: 0,
        ..config.clone()
    };
    fit_irmv1(train, &config)
}

pub fn fit_with_report(train: &[EnvDataset], config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let p = validate_collection(train)?;
    if train.len() < 2 && config.lambda > 0.0 {
        log::warn!("IRMv1 with a single environment: the invariance penalty has no effect");
    }
    let d = config.repr_dim.unwrap_or(p.max(2));
    let mut rng = rng_from(config.seed);
    let phi0 = Array2::from_shape_fn((d, p), |_| config.init_std * rng.sample::<f64, _>(StandardNormal));
    // Validates d ≥ 2.
    LinearIRMModel::new(phi0.clone(), config.lambda)?;

    let objective = |lambda: f64| {
        move |flat: &Array1<f64>| {
            let phi = flat.view().into_shape_with_order((d, p)).expect("flat length is d·p");
            let beta = phi.sum_axis(Axis(0));
            let (risk, penalty, grad) = objective_in_weights(&beta, train, lambda);
            let g = broadcast_rows(&grad, d).into_shape_with_order(d * p).expect("d·p");
            (risk + lambda * penalty, g)
        }
    };
    let method = match config.optimizer {
        Optimizer::GradientDescent => Method::GradientDescent,
        Optimizer::Lbfgs { memory } => Method::Lbfgs { memory },
    };
    let options = |max_iters| optim::Options {
        method,
        max_iters,
        tolerance: config.tolerance,
        f_tolerance: config.f_tolerance,
        initial_step: config.learning_rate,
    };

    let x0 = phi0.into_shape_with_order(d * p).expect("d·p");
    let initial_objective = objective(config.lambda)(&x0).0;

    let mut start = x0;
    let mut warm_iters = 0;
    if config.lambda > 0.0 && config.warmup_iters > 0 {
        let warm = optim::minimize(objective(0.0), start, options(config.warmup_iters))?;
        warm_iters = warm.iterations;
        start = warm.x;
    }
    let fit = optim::minimize(objective(config.lambda), start, options(config.max_iters)).map_err(|e| match e {
        crate::error::Error::Fit { iteration, message } => crate::error::Error::Fit {
            iteration: iteration + warm_iters,
            message,
        },
        other => other,
    })?;
    log::debug!(
        "fit λ={} stopped after {} iterations ({:?}), objective {:.6e}, |grad| {:.3e}",
        config.lambda,
        warm_iters + fit.iterations,
        fit.stop,
        fit.value,
        fit.gradient_norm
    );

    let phi = fit.x.into_shape_with_order((d, p)).expect("d·p");
    Ok(FitReport {
        model: LinearIRMModel::new(phi, config.lambda)?,
        initial_objective,
        final_objective: fit.value,
        iterations: warm_iters + fit.iterations,
        stop: fit.stop,
        trace: fit.trace,
    })
}
