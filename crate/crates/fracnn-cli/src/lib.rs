//! Experiment harness around the fractional-gradient network crate:
//! MNIST IDX ingestion, the one-dimensional quadratic benchmark, the order
//! sweep over fresh LeNet trainings and deterministic CSV reports.

pub mod csvout;
pub mod fetch;
pub mod idx;
pub mod quadratic;
pub mod sweep;

use std::path::PathBuf;

/// Data directory resolution: explicit flag, then the `FRACNN_DATA_DIR`
/// environment variable, then `./data`.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("FRACNN_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}
