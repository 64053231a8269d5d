//! Replicated coverage experiments: generate or load data, split, fit,
//! calibrate, build intervals on held-out points and score them.

mod config;
mod output;
mod run;

pub use config::{DataSource, ExperimentConfig, Method, ModelKind};
pub use output::{
    emit_outputs, read_metrics, summarize, write_metrics, MetricsRow, Scope, SummaryRow, BOXPLOT_FILE, METRICS_FILE,
    SUMMARY_FILE,
};
pub use run::{run_experiment, run_replications, ReplicationOutcome};
