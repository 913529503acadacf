//! Representations of the Pareto front of a four-criteria strategic asset
//! allocation problem: expected return, volatility, solvency ratio and l1
//! distance to a reference portfolio.
//!
//! The engine splits the objective space into boxes bounded by local lower
//! and upper bounds, repeatedly picks the box with the largest minimal edge
//! and solves a weighted Tchebycheff problem inside it. See [`boxalgo::run`].
//!
//! ```no_run
//! use boxfront_core::{boxalgo, ingest};
//!
//! let model = ingest::load_model_files(&ingest::ModelPaths {
//!     assets: "data/table1_assets.csv".into(),
//!     calibration: Some("data/synthetic_calibration.toml".into()),
//!     correlation: Some("data/synthetic_correlation.csv".into()),
//!     ..Default::default()
//! })
//! .unwrap();
//! let archive = boxalgo::run(&model.spec, &boxalgo::RunConfig::default()).unwrap();
//! println!("{} portfolios", archive.records.len());
//! ```

pub mod domain;
pub mod exec;
pub mod objectives;
pub mod problem;
pub mod scalarization;
pub mod solver;
pub mod bounds;
pub mod boxalgo;
pub mod ingest;

pub use domain::{
    AssetUniverse, BoundOp, GroupConstraint, ModelSpec, Objective, ObjectiveBound, PortfolioWeights, Sense,
    SolvencyCalibration,
};
pub use exec::Execution;
pub use objectives::{evaluate_all, ObjectiveVector};
pub use solver::{SolverConfig, SolverResult, Status};
