//! Shared fixtures for the benchmarks.

use acir_core::conformal::{calibrate, CalibrationState};
use acir_core::datagen::{generate_sem, SemConfig, Setting};
use acir_core::models::{fit_irmv1, FitConfig};
use acir_core::EnvDataset;

/// One sample per environment of the default benchmark shape.
pub fn sem_envs(setting: Setting, n_per_env: usize, seed: u64) -> Vec<EnvDataset> {
    let sem = SemConfig::new(setting, seed);
    sem.env_params()
        .iter()
        .enumerate()
        .map(|(i, &e)| generate_sem(&sem, e, n_per_env, seed.wrapping_add(1 + i as u64)).expect("valid SEM draw"))
        .collect()
}

/// A fitted model calibrated on fresh data.
pub fn calibrated_state(setting: Setting, n_per_env: usize) -> (CalibrationState, Vec<EnvDataset>) {
    let train = sem_envs(setting, n_per_env, 1);
    let cal = sem_envs(setting, n_per_env, 2);
    let test = sem_envs(setting, n_per_env, 3);
    let model = fit_irmv1(&train, &FitConfig::default()).expect("fit converges");
    (calibrate(&model, &cal).expect("calibration"), test)
}
