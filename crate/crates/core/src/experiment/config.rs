use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::{SemConfig, Setting};
use crate::dataset::EnvId;
use crate::error::{Error, Result};
use crate::models::FitConfig;

/// Interval method: split conformal (SC) or adaptive (AC) around an ERM or IRM fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    ScErm,
    ScIrm,
    AcErm,
    AcIrm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Erm,
    Irm,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Erm => "ERM",
            ModelKind::Irm => "IRM",
        }
    }
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ScErm, Method::ScIrm, Method::AcErm, Method::AcIrm];

    pub fn label(self) -> &'static str {
        match self {
            Method::ScErm => "SC-ERM",
            Method::ScIrm => "SC-IRM",
            Method::AcErm => "AC-ERM",
            Method::AcIrm => "AC-IRM",
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            Method::ScErm | Method::AcErm => ModelKind::Erm,
            Method::ScIrm | Method::AcIrm => ModelKind::Irm,
        }
    }

    pub fn adaptive(self) -> bool {
        matches!(self, Method::AcErm | Method::AcIrm)
    }

    /// Parses a comma-separated list such as `sc-irm,ac-irm`; `all` selects
    /// every method and an empty string none.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Method::ALL.to_vec());
        }
        let mut out: Vec<Method> = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}` (expected sc-erm, sc-irm, ac-erm or ac-irm)")))
    }
}

/// Where an experiment's data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Sem(Setting),
    /// A multi-environment CSV. Environments listed in `test_envs` are held
    /// out whole as test data; when the list is empty every environment is
    /// split three ways.
    Csv { path: PathBuf, test_envs: Vec<EnvId> },
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::Sem(s) => s.label().to_string(),
            DataSource::Csv { path, .. } => format!("csv:{}", path.display()),
        }
    }
}

impl FromStr for DataSource {
    type Err = Error;

    /// `FOU`/`FEU`/`POU`/`PEU`, or `csv:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.strip_prefix("csv:") {
            Some(path) if !path.is_empty() => Ok(DataSource::Csv {
                path: PathBuf::from(path),
                test_envs: Vec::new(),
            }),
            Some(_) => Err(Error::invalid("`csv:` needs a path")),
            None => s.parse().map(DataSource::Sem),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sources: Vec<DataSource>,
    pub alpha: f64,
    pub n_train_total: usize,
    pub n_cal_total: usize,
    pub n_test_total: usize,
    pub env_params: Vec<f64>,
    pub replications: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    /// Draw the data once and only re-split across replications.
    pub resplit_only: bool,
    /// Also score the fitted representations with the invariance statistic.
    pub assess_invariance: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sources: vec![DataSource::Sem(Setting::Fou)],
            alpha: 0.05,
            n_train_total: 2000,
            n_cal_total: 2000,
            n_test_total: 2000,
            env_params: SemConfig::DEFAULT_ENV_PARAMS.to_vec(),
            replications: 20,
            seed: 7,
            methods: Method::ALL.to_vec(),
            fit: FitConfig::default(),
            resplit_only: false,
            assess_invariance: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        crate::quantile::check_alpha(self.alpha)?;
        if self.sources.is_empty() {
            return Err(Error::invalid("no settings to run"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be ≥ 1"));
        }
        let m = self.env_params.len();
        if m == 0 {
            return Err(Error::invalid("no environment parameters"));
        }
        for (name, n) in [
            ("n_train_total", self.n_train_total),
            ("n_cal_total", self.n_cal_total),
            ("n_test_total", self.n_test_total),
        ] {
            if n < m {
                return Err(Error::invalid(format!("{name} = {n} is smaller than the {m} environments")));
            }
        }
        Ok(())
    }

    pub(crate) fn models(&self) -> Vec<ModelKind> {
        let mut kinds: Vec<ModelKind> = self.methods.iter().map(|m| m.model()).collect();
        kinds.sort();
        kinds.dedup();
        kinds
    }
}

/// `total` split as evenly as possible over `m` parts, larger parts first.
pub(crate) fn allocate(total: usize, m: usize) -> Vec<usize> {
    (0..m).map(|i| total / m + usize::from(i < total % m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_lists() {
        assert_eq!(Method::parse_list("sc-irm,AC-IRM").unwrap(), vec![Method::ScIrm, Method::AcIrm]);
        assert_eq!(Method::parse_list("all").unwrap(), Method::ALL.to_vec());
        assert!(Method::parse_list("").unwrap().is_empty());
        assert!(Method::parse_list("sc-foo").is_err());
    }

    #[test]
    fn sources() {
        assert_eq!("FOU".parse::<DataSource>().unwrap(), DataSource::Sem(Setting::Fou));
        assert_eq!("csv:a/b.csv".parse::<DataSource>().unwrap().label(), "csv:a/b.csv");
        assert!("csv:".parse::<DataSource>().is_err());
        assert!("XYZ".parse::<DataSource>().is_err());
    }

    #[test]
    fn even_allocation() {
        assert_eq!(allocate(2000, 3), vec![667, 667, 666]);
        assert_eq!(allocate(3, 3), vec![1, 1, 1]);
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.alpha = 1.5));
        assert!(bad(|c| c.replications = 0));
        assert!(bad(|c| c.n_cal_total = 2));
        assert!(bad(|c| c.sources.clear()));
    }
}
