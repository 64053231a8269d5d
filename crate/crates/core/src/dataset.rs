//! Labeled samples grouped by environment.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Integer label identifying an environment (a data-generating regime).
pub type EnvId = i64;

/// One environment's labeled sample: an `n × p` feature matrix and `n` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDataset {
    env_id: EnvId,
    features: Array2<f64>,
    targets: Array1<f64>,
}

impl EnvDataset {
    /// Builds a dataset, checking shapes and finiteness.
    pub fn new(env_id: EnvId, features: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::invalid(format!("environment {env_id} has no rows")));
        }
        if targets.len() != n {
            return Err(Error::invalid(format!(
                "environment {env_id}: {n} feature rows but {} targets",
                targets.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::invalid(format!("environment {env_id} has no feature columns")));
        }
        if !features.iter().chain(targets.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "environment {env_id} contains non-finite values"
            )));
        }
        Ok(Self {
            env_id,
            features,
            targets,
        })
    }

    pub fn env_id(&self) -> EnvId {
        self.env_id
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    /// Number of rows `n_e`.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Rows at `indices`, in the given order. Indices must be in range.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::invalid("row selection is empty"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for environment {} with {} rows",
                self.env_id,
                self.len()
            )));
        }
        Ok(Self {
            env_id: self.env_id,
            features: self.features.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
        })
    }

    /// Same rows under a different environment label.
    pub fn relabeled(&self, env_id: EnvId) -> Self {
        Self {
            env_id,
            ..self.clone()
        }
    }
}

/// A disjoint train/calibration partition of one environment's rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: EnvDataset,
    pub calibration: EnvDataset,
}

/// Checks that a collection is nonempty, has unique env ids, and a common
/// feature dimension, which it returns.
pub fn validate_collection(envs: &[EnvDataset]) -> Result<usize> {
    let first = envs
        .first()
        .ok_or_else(|| Error::invalid("environment collection is empty"))?;
    let p = first.dim();
    let mut seen = BTreeSet::new();
    for env in envs {
        if !seen.insert(env.env_id()) {
            return Err(Error::invalid(format!("duplicate env id {}", env.env_id())));
        }
        if env.dim() != p {
            return Err(Error::invalid(format!(
                "environment {} has {} features, expected {p}",
                env.env_id(),
                env.dim()
            )));
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_shape_mismatch_and_nan() {
        assert!(EnvDataset::new(0, array![[1.0], [2.0]], array![1.0]).is_err());
        assert!(EnvDataset::new(0, array![[f64::NAN]], array![1.0]).is_err());
        assert!(EnvDataset::new(0, Array2::zeros((0, 2)), Array1::zeros(0)).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = EnvDataset::new(1, array![[1.0]], array![1.0]).unwrap();
        assert!(validate_collection(&[a.clone(), a.clone()]).is_err());
        assert_eq!(validate_collection(&[a.clone(), a.relabeled(2)]).unwrap(), 1);
    }

    #[test]
    fn select_rows_checks_bounds() {
        let a = EnvDataset::new(1, array![[1.0], [2.0], [3.0]], array![1.0, 2.0, 3.0]).unwrap();
        let s = a.select_rows(&[2, 0]).unwrap();
        assert_eq!(s.targets(), &array![3.0, 1.0]);
        assert!(a.select_rows(&[3]).is_err());
    }
}
