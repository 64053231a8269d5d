//! Linear structural equation model with a causal block `X₁`, an anti-causal
//! block `X₂` and an optional hidden confounder `H`.
//!
//! For environment parameter `e`:
//!
//! ```text
//! H  ~ N(0, e²·I)
//! X₁ = N(0, e²·I) + W_{H→1} H
//! Y  = W_{1→Y}·X₁ + N(0, σ_y²) + W_{H→Y}·H
//! X₂ = W_{Y→2} Y + N(0, σ_2²·I) + W_{H→2} H
//! ```
//!
//! `(σ_y², σ_2²)` is `(e², 1)` for homoskedastic settings and `(1, e²)` for
//! heteroskedastic ones. Fully-observed settings zero every `W_{H→·}`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{EnvDataset, EnvId};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, rng_from};

const HIDDEN_STREAM: u64 = 0x4849_4444;
const NOISE_STREAM: u64 = 0x4e4f_4953;

/// Benchmark setting: fully (F) or partially (P) observed, homoskedastic (O)
/// or heteroskedastic (E) noise, unscrambled (U) covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Fou,
    Feu,
    Pou,
    Peu,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::Fou, Setting::Pou, Setting::Feu, Setting::Peu];

    pub fn label(self) -> &'static str {
        match self {
            Setting::Fou => "FOU",
            Setting::Feu => "FEU",
            Setting::Pou => "POU",
            Setting::Peu => "PEU",
        }
    }

    pub fn partially_observed(self) -> bool {
        matches!(self, Setting::Pou | Setting::Peu)
    }

    pub fn heteroskedastic(self) -> bool {
        matches!(self, Setting::Feu | Setting::Peu)
    }

    /// `(σ_y², σ_2²)` for environment parameter `e`.
    pub fn noise_variances(self, e: f64) -> (f64, f64) {
        if self.heteroskedastic() {
            (1.0, e * e)
        } else {
            (e * e, 1.0)
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FOU" => Ok(Setting::Fou),
            "FEU" => Ok(Setting::Feu),
            "POU" => Ok(Setting::Pou),
            "PEU" => Ok(Setting::Peu),
            other => Err(Error::invalid(format!(
                "unknown setting `{other}` (expected FOU, FEU, POU or PEU)"
            ))),
        }
    }
}

/// Structural weights shared by every environment of a config.
#[derive(Debug, Clone, PartialEq)]
pub struct SemWeights {
    pub x1_to_y: Array1<f64>,
    pub y_to_x2: Array1<f64>,
    /// `dim_x1 × dim_x1`, maps `H` into `X₁`.
    pub hidden_to_x1: Array2<f64>,
    pub hidden_to_y: Array1<f64>,
    /// `dim_x2 × dim_x1`, maps `H` into `X₂`.
    pub hidden_to_x2: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemConfig {
    setting: Setting,
    env_params: Vec<f64>,
    dim_x1: usize,
    dim_x2: usize,
    seed: u64,
    noise_scale: f64,
    weights: SemWeights,
}

impl SemConfig {
    pub const DEFAULT_ENV_PARAMS: [f64; 3] = [0.2, 2.0, 5.0];

    /// Default shape: three environments `e ∈ {0.2, 2, 5}`, five causal and
    /// five anti-causal features.
    pub fn new(setting: Setting, seed: u64) -> Self {
        Self::with_shape(setting, Self::DEFAULT_ENV_PARAMS.to_vec(), 5, 5, seed)
            .expect("default SEM shape is valid")
    }

    pub fn with_shape(
        setting: Setting,
        env_params: Vec<f64>,
        dim_x1: usize,
        dim_x2: usize,
        seed: u64,
    ) -> Result<Self> {
        if env_params.is_empty() {
            return Err(Error::invalid("SEM needs at least one environment parameter"));
        }
        if env_params.iter().any(|e| !e.is_finite() || *e < 0.0) {
            return Err(Error::invalid(format!(
                "environment parameters must be finite and nonnegative: {env_params:?}"
            )));
        }
        if dim_x1 == 0 || dim_x2 == 0 {
            return Err(Error::invalid("SEM feature blocks need dimension ≥ 1"));
        }
        let weights = draw_weights(setting, dim_x1, dim_x2, seed);
        Ok(Self {
            setting,
            env_params,
            dim_x1,
            dim_x2,
            seed,
            noise_scale: 1.0,
            weights,
        })
    }

    /// Scales the `Y` and `X₂` noise terms; `0.0` gives a noiseless system.
    pub fn with_noise_scale(mut self, scale: f64) -> Self {
        self.noise_scale = scale;
        self
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn env_params(&self) -> &[f64] {
        &self.env_params
    }

    pub fn dim_x1(&self) -> usize {
        self.dim_x1
    }

    pub fn dim_x2(&self) -> usize {
        self.dim_x2
    }

    /// Total feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim_x1 + self.dim_x2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &SemWeights {
        &self.weights
    }

    /// Env id assigned to `env_param`: its index in `env_params`.
    pub fn env_id_of(&self, env_param: f64) -> Result<EnvId> {
        self.env_params
            .iter()
            .position(|&e| e == env_param)
            .map(|i| i as EnvId)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "environment parameter {env_param} is not one of {:?}",
                    self.env_params
                ))
            })
    }
}

fn draw_weights(setting: Setting, dim_x1: usize, dim_x2: usize, seed: u64) -> SemWeights {
    let mut rng = rng_from(seed);
    let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
    let x1_to_y = Array1::from(normal(dim_x1));
    let y_to_x2 = Array1::from(normal(dim_x2));
    // Always drawn so the observed weights do not depend on the setting.
    let h1 = normal(dim_x1 * dim_x1);
    let hy = normal(dim_x1);
    let h2 = normal(dim_x2 * dim_x1);
    let keep = if setting.partially_observed() { 1.0 } else { 0.0 };
    let scaled = |v: Vec<f64>| v.into_iter().map(|w| w * keep).collect::<Vec<_>>();
    SemWeights {
        x1_to_y,
        y_to_x2,
        hidden_to_x1: Array2::from_shape_vec((dim_x1, dim_x1), scaled(h1)).unwrap(),
        hidden_to_y: Array1::from(scaled(hy)),
        hidden_to_x2: Array2::from_shape_vec((dim_x2, dim_x1), scaled(h2)).unwrap(),
    }
}

/// A generated environment together with its hidden confounder draws.
#[derive(Debug, Clone)]
pub struct SemSample {
    pub data: EnvDataset,
    /// `n × dim_x1` draws of `H`.
    pub hidden: Array2<f64>,
}

/// Draws `n` i.i.d. rows `(X₁, X₂), Y` for environment `env_param`.
///
/// Deterministic in `(config.seed, stream_seed)`.
pub fn generate_sem(config: &SemConfig, env_param: f64, n: usize, stream_seed: u64) -> Result<EnvDataset> {
    generate_sem_with_hidden(
        config,
        env_param,
        n,
        derive_seed(stream_seed, &[NOISE_STREAM]),
        derive_seed(stream_seed, &[HIDDEN_STREAM]),
    )
    .map(|s| s.data)
}

/// Like [`generate_sem`] but with separate seeds for the observed noise and
/// the hidden confounder, and the confounder returned.
pub fn generate_sem_with_hidden(
    config: &SemConfig,
    env_param: f64,
    n: usize,
    noise_seed: u64,
    hidden_seed: u64,
) -> Result<SemSample> {
    let env_id = config.env_id_of(env_param)?;
    if n == 0 {
        return Err(Error::invalid("cannot generate an empty environment"));
    }
    let (d1, d2) = (config.dim_x1, config.dim_x2);
    let w = &config.weights;
    let e = env_param;
    let (var_y, var_2) = config.setting.noise_variances(e);
    let sd_y = var_y.sqrt() * config.noise_scale;
    let sd_2 = var_2.sqrt() * config.noise_scale;

    let mut hidden_rng = rng_from(hidden_seed);
    let mut rng = rng_from(noise_seed);
    let mut hidden = Array2::zeros((n, d1));
    let mut features = Array2::zeros((n, d1 + d2));
    let mut targets = Array1::zeros(n);

    for i in 0..n {
        let h: Array1<f64> = (0..d1).map(|_| e * hidden_rng.sample::<f64, _>(StandardNormal)).collect();
        let x1: Array1<f64> =
            (0..d1).map(|_| e * rng.sample::<f64, _>(StandardNormal)).collect::<Array1<f64>>() + w.hidden_to_x1.dot(&h);
        let y = w.x1_to_y.dot(&x1) + sd_y * rng.sample::<f64, _>(StandardNormal) + w.hidden_to_y.dot(&h);
        let x2_noise: Array1<f64> = (0..d2).map(|_| sd_2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let x2 = &w.y_to_x2 * y + x2_noise + w.hidden_to_x2.dot(&h);

        hidden.row_mut(i).assign(&h);
        features.slice_mut(ndarray::s![i, ..d1]).assign(&x1);
        features.slice_mut(ndarray::s![i, d1..]).assign(&x2);
        targets[i] = y;
    }

    Ok(SemSample {
        data: EnvDataset::new(env_id, features, targets)?,
        hidden,
    })
}
