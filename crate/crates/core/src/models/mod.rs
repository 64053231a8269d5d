//! Linear ERM and IRMv1 predictors.

mod fit;
mod linear;
mod objective;
mod optim;

pub use fit::{fit_erm, fit_irmv1, fit_with_report, FitConfig, FitReport, Optimizer};
pub use linear::LinearIRMModel;
pub use objective::{irm_objective, Objective};
pub use optim::StopReason;
