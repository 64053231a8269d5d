//! Distribution-free prediction intervals for multi-environment regression.
//!
//! A linear IRMv1 (or ERM) predictor is fitted on training environments, and
//! absolute residuals on held-out calibration environments turn it into
//! either a pooled split-conformal interval or an adaptive interval whose
//! width is a similarity-weighted mix of per-environment quantiles. The
//! [`invariance`] module scores how invariant a fitted representation is
//! across environments.
//!
//! Module map:
//!
//! - [`dataset`], [`interval`], [`quantile`], [`metrics`]: shared containers,
//!   the conformal quantile, coverage and length metrics
//! - [`datagen`]: linear SEM benchmark, CSV ingestion, random splits
//! - [`models`]: ERM / IRMv1 fitting
//! - [`conformal`]: calibration, split-conformal and adaptive intervals
//! - [`invariance`]: likelihood-ratio invariance statistic
//! - [`experiment`]: replicated experiment runner and result files

pub mod conformal;
pub mod dataset;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod interval;
pub mod invariance;
pub mod metrics;
pub mod models;
pub mod quantile;
pub mod seeding;

pub use conformal::{acir_interval, calibrate, sc_interval, CalibrationState, EnvCalibration};
pub use dataset::{DataSplit, EnvDataset, EnvId};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentConfig, Method, MetricsRow};
pub use interval::PredictionInterval;
pub use invariance::{fit_density, inv_statistic, DensityModel, DensityRatio, InvarianceReport};
pub use metrics::{average_length, coverage_rate};
pub use models::{fit_erm, fit_irmv1, FitConfig, LinearIRMModel};
pub use quantile::conformal_quantile;
