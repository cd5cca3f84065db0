//! Simulation and estimation engine for average-treatment-effect benchmarks.

pub mod bootstrap;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod rng;
pub mod scenario;

pub use bootstrap::{BootstrapConfig, EstimateResult, IntervalKind};
pub use dataset::{CellCounts, SimulatedDataset};
pub use error::{Error, Result};
pub use estimators::{Estimator, EstimatorSpec, ModelSpec, PointEstimate, Strategy};
pub use harness::{run_study, StudyConfig, StudyMetrics, StudyOutput};
pub use scenario::{build_scenario, simulate, Scenario};
