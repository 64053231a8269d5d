//! Finite-sample marginal coverage of the pooled split-conformal interval on
//! fresh draws from the environment mixture.

use acir_core::conformal::{calibrate, sc_interval};
use acir_core::datagen::{generate_sem, SemConfig, Setting};
use acir_core::models::{fit_erm, fit_irmv1, FitConfig};
use acir_core::seeding::{derive_seed, rng_from};
use acir_core::{coverage_rate, EnvDataset};
use rand::Rng;

fn draw(sem: &SemConfig, n: usize, seed: u64) -> Vec<EnvDataset> {
    sem.env_params()
        .iter()
        .enumerate()
        .map(|(i, &e)| generate_sem(sem, e, n, derive_seed(seed, &[i as u64])).unwrap())
        .collect()
}

#[test]
fn sc_coverage_meets_binomial_lower_bound() {
    let alpha = 0.05;
    let t = 2000;
    let bound = 1.0 - alpha - 3.0 * (alpha * (1.0 - alpha) / t as f64).sqrt();
    for (k, setting) in Setting::ALL.into_iter().enumerate() {
        let sem = SemConfig::new(setting, 100 + k as u64);
        let train = draw(&sem, 667, 1);
        let cal = draw(&sem, 667, 2);
        let cfg = FitConfig::default();
        for model in [fit_erm(&train, &cfg).unwrap(), fit_irmv1(&train, &cfg).unwrap()] {
            let state = calibrate(&model, &cal).unwrap();
            // Each test point picks its environment uniformly at random.
            let mut rng = rng_from(3 + k as u64);
            let pools = draw(&sem, t, 4);
            let mut intervals = Vec::with_capacity(t);
            let mut truths = Vec::with_capacity(t);
            for i in 0..t {
                let env = &pools[rng.random_range(0..pools.len())];
                intervals.push(sc_interval(&state, env.row(i), alpha).unwrap());
                truths.push(env.targets()[i]);
            }
            let cov = coverage_rate(&intervals, &truths).unwrap();
            assert!(cov >= bound, "{setting}: coverage {cov} below {bound}");
        }
    }
}
