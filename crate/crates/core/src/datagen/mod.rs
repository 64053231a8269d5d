//! Synthetic multi-environment data and CSV ingestion.

mod csv_io;
mod sem;
mod split;

pub use csv_io::{load_csv, parse_csv, write_csv};
pub use sem::{generate_sem, generate_sem_with_hidden, SemConfig, SemSample, SemWeights, Setting};
pub use split::{split_dataset, split_dataset_at};
