use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{allocate, DataSource, ExperimentConfig, Method, ModelKind};
use super::output::{MetricsRow, Scope};
use crate::conformal::{acir_interval, calibrate, sc_interval, CalibrationState};
use crate::datagen::{generate_sem, load_csv, split_dataset_at, SemConfig};
use crate::dataset::{validate_collection, EnvDataset, EnvId};
use crate::error::{Error, Result};
use crate::interval::PredictionInterval;
use crate::invariance::{fit_density, inv_statistic, InvarianceReport};
use crate::metrics::{average_length, coverage_rate};
use crate::models::{fit_erm, fit_irmv1, FitConfig, LinearIRMModel};
use crate::seeding::derive_seed;

const WEIGHTS: u64 = 1;
const POOL: u64 = 2;
const TEST: u64 = 3;
const SPLIT: u64 = 4;
const FIT: u64 = 5;

/// Everything one replication of one data source produced.
#[derive(Debug, Clone)]
pub struct ReplicationOutcome {
    pub setting: String,
    pub replication: usize,
    pub rows: Vec<MetricsRow>,
    /// Invariance reports of the fitted models, on the training splits.
    pub invariance: Vec<(ModelKind, InvarianceReport)>,
}

struct Prepared {
    train: Vec<EnvDataset>,
    cal: Vec<EnvDataset>,
    test: Vec<EnvDataset>,
}

enum Loaded {
    Sem(Box<SemConfig>),
    Csv { envs: Vec<EnvDataset>, test_envs: Vec<EnvId> },
}

/// Runs every replication of every data source and returns the metric rows,
/// sorted by method, setting, replication and scope.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricsRow>> {
    let mut rows: Vec<MetricsRow> = run_replications(config)?.into_iter().flat_map(|o| o.rows).collect();
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    Ok(rows)
}

/// Like [`run_experiment`] but keeps each replication's outcome, in
/// source-then-replication order.
pub fn run_replications(config: &ExperimentConfig) -> Result<Vec<ReplicationOutcome>> {
    config.validate()?;
    let loaded: Vec<(String, Loaded)> = config
        .sources
        .iter()
        .map(|s| load(config, s).map(|l| (s.label(), l)))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..loaded.len())
        .flat_map(|s| (0..config.replications).map(move |r| (s, r)))
        .collect();
    jobs.par_iter()
        .map(|&(s, rep)| {
            let (label, source) = &loaded[s];
            log::debug!("{label}: replication {rep}");
            run_one(config, label, source, rep)
        })
        .collect()
}

fn load(config: &ExperimentConfig, source: &DataSource) -> Result<Loaded> {
    match source {
        DataSource::Sem(setting) => {
            let sem = SemConfig::with_shape(
                *setting,
                config.env_params.clone(),
                5,
                5,
                derive_seed(config.seed, &[WEIGHTS]),
            )?;
            Ok(Loaded::Sem(Box::new(sem)))
        }
        DataSource::Csv { path, test_envs } => {
            let envs = load_csv(path)?;
            let ids: Vec<EnvId> = envs.iter().map(EnvDataset::env_id).collect();
            if let Some(bad) = test_envs.iter().find(|e| !ids.contains(e)) {
                return Err(Error::invalid(format!("{}: no environment {bad}", path.display())));
            }
            if !test_envs.is_empty() && ids.iter().all(|e| test_envs.contains(e)) {
                return Err(Error::invalid("every environment is held out for testing"));
            }
            Ok(Loaded::Csv {
                envs,
                test_envs: test_envs.clone(),
            })
        }
    }
}

fn run_one(config: &ExperimentConfig, label: &str, source: &Loaded, rep: usize) -> Result<ReplicationOutcome> {
    let data = prepare(config, source, rep).map_err(|e| e.at_stage(rep, "data"))?;
    let fit_cfg = FitConfig {
        seed: derive_seed(config.seed, &[FIT, rep as u64]),
        ..config.fit.clone()
    };

    let mut models: BTreeMap<ModelKind, (LinearIRMModel, CalibrationState)> = BTreeMap::new();
    for kind in config.models() {
        let model = match kind {
            ModelKind::Erm => fit_erm(&data.train, &fit_cfg),
            ModelKind::Irm => fit_irmv1(&data.train, &fit_cfg),
        }
        .map_err(|e| e.at_stage(rep, "fit"))?;
        let state = calibrate(&model, &data.cal).map_err(|e| e.at_stage(rep, "calibrate"))?;
        models.insert(kind, (model, state));
    }

    let mut rows = Vec::new();
    for &method in &config.methods {
        let (_, state) = &models[&method.model()];
        rows.extend(
            score_method(method, state, &data.test, config.alpha, label, rep).map_err(|e| e.at_stage(rep, "predict"))?,
        );
    }

    let mut invariance = Vec::new();
    if config.assess_invariance && data.train.len() >= 2 {
        let density = fit_density(&data.train).map_err(|e| e.at_stage(rep, "invariance"))?;
        for (kind, (model, _)) in &models {
            let report = inv_statistic(model, &density, &data.train).map_err(|e| e.at_stage(rep, "invariance"))?;
            invariance.push((*kind, report));
        }
    }

    Ok(ReplicationOutcome {
        setting: label.to_string(),
        replication: rep,
        rows,
        invariance,
    })
}

fn score_method(
    method: Method,
    state: &CalibrationState,
    test: &[EnvDataset],
    alpha: f64,
    setting: &str,
    rep: usize,
) -> Result<Vec<MetricsRow>> {
    let mut all_iv: Vec<PredictionInterval> = Vec::new();
    let mut all_y: Vec<f64> = Vec::new();
    let mut rows = Vec::with_capacity(test.len() + 1);
    let row = |scope, iv: &[PredictionInterval], y: &[f64]| -> Result<MetricsRow> {
        Ok(MetricsRow {
            method,
            setting: setting.to_string(),
            replication: rep,
            scope,
            coverage: coverage_rate(iv, y)?,
            avg_length: average_length(iv)?,
        })
    };
    for env in test {
        let iv = env
            .features()
            .rows()
            .into_iter()
            .map(|x| {
                if method.adaptive() {
                    acir_interval(state, x, alpha, None)
                } else {
                    sc_interval(state, x, alpha)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let y = env.targets().as_slice().expect("standard layout").to_vec();
        rows.push(row(Scope::Env(env.env_id()), &iv, &y)?);
        all_iv.extend(iv);
        all_y.extend(y);
    }
    rows.insert(0, row(Scope::Pooled, &all_iv, &all_y)?);
    Ok(rows)
}

fn prepare(config: &ExperimentConfig, source: &Loaded, rep: usize) -> Result<Prepared> {
    let data_rep = if config.resplit_only { 0 } else { rep as u64 };
    let split_seed = |i: usize| derive_seed(config.seed, &[SPLIT, rep as u64, i as u64]);
    match source {
        Loaded::Sem(sem) => {
            let m = sem.env_params().len();
            let n_tr = allocate(config.n_train_total, m);
            let n_cal = allocate(config.n_cal_total, m);
            let n_te = allocate(config.n_test_total, m);
            let mut out = Prepared {
                train: Vec::with_capacity(m),
                cal: Vec::with_capacity(m),
                test: Vec::with_capacity(m),
            };
            for (i, &e) in sem.env_params().iter().enumerate() {
                let pool = generate_sem(sem, e, n_tr[i] + n_cal[i], derive_seed(config.seed, &[POOL, data_rep, i as u64]))?;
                let split = split_dataset_at(&pool, n_tr[i], split_seed(i))?;
                out.train.push(split.train);
                out.cal.push(split.calibration);
                out.test
                    .push(generate_sem(sem, e, n_te[i], derive_seed(config.seed, &[TEST, data_rep, i as u64]))?);
            }
            Ok(out)
        }
        Loaded::Csv { envs, test_envs } => {
            let train_share = config.n_train_total as f64 / (config.n_train_total + config.n_cal_total) as f64;
            let total = (config.n_train_total + config.n_cal_total + config.n_test_total) as f64;
            let test_share = config.n_test_total as f64 / total;
            let mut out = Prepared {
                train: Vec::new(),
                cal: Vec::new(),
                test: Vec::new(),
            };
            for (i, env) in envs.iter().enumerate() {
                if test_envs.contains(&env.env_id()) {
                    out.test.push(env.clone());
                    continue;
                }
                let fit_part = if test_envs.is_empty() {
                    let n_test = (env.len() as f64 * test_share).round() as usize;
                    let n_keep = env.len().checked_sub(n_test).filter(|&k| k >= 2 && n_test >= 1).ok_or_else(|| {
                        Error::invalid(format!("environment {} is too small to split three ways", env.env_id()))
                    })?;
                    let split = split_dataset_at(env, n_keep, derive_seed(split_seed(i), &[TEST]))?;
                    out.test.push(split.calibration);
                    split.train
                } else {
                    env.clone()
                };
                let n_train = ((fit_part.len() as f64 * train_share).round() as usize).clamp(1, fit_part.len() - 1);
                let split = split_dataset_at(&fit_part, n_train, split_seed(i))?;
                out.train.push(split.train);
                out.cal.push(split.calibration);
            }
            validate_collection(&out.train)?;
            Ok(out)
        }
    }
}
