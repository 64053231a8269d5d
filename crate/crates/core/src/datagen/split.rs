use rand::seq::SliceRandom;

use crate::dataset::{DataSplit, EnvDataset};
use crate::error::{Error, Result};
use crate::seeding::rng_from;

/// Uniformly random train/calibration partition with `⌊fraction · n⌋` train rows.
pub fn split_dataset(data: &EnvDataset, train_fraction: f64, seed: u64) -> Result<DataSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} is outside (0, 1)"
        )));
    }
    let n_train = (train_fraction * data.len() as f64).floor() as usize;
    split_dataset_at(data, n_train, seed)
}

/// Random partition with exactly `n_train` train rows.
pub fn split_dataset_at(data: &EnvDataset, n_train: usize, seed: u64) -> Result<DataSplit> {
    let n = data.len();
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(format!(
            "split of environment {} leaves an empty part ({n_train} of {n} rows for training)",
            data.env_id()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(seed));
    let (train, cal) = order.split_at(n_train);
    Ok(DataSplit {
        train: data.select_rows(train)?,
        calibration: data.select_rows(cal)?,
    })
}
