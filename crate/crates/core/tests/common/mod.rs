#![allow(dead_code)]

pub mod invariants;
pub mod oracle;

use std::path::PathBuf;

use boxfront_core::domain::ModelSpec;
use boxfront_core::ingest::{load_model_files, ModelPaths};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn data(name: &str) -> PathBuf {
    data_dir().join(name)
}

/// Bundled assets with the synthetic correlation and calibration and the
/// bundled reference portfolio.
pub fn bundled_model() -> ModelSpec {
    load_model_files(&ModelPaths {
        assets: data("table1_assets.csv"),
        correlation: Some(data("synthetic_correlation.csv")),
        calibration: Some(data("synthetic_calibration.toml")),
        reference: Some(data("table2_reference.csv")),
        constraints: None,
    })
    .unwrap()
    .spec
}

/// Bundled assets only: identity correlation, no solvency criterion.
pub fn plain_model() -> ModelSpec {
    load_model_files(&ModelPaths {
        assets: data("table1_assets.csv"),
        reference: Some(data("table2_reference.csv")),
        ..Default::default()
    })
    .unwrap()
    .spec
}
