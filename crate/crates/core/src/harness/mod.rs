//! Experiment harness: scenario presets, the dumbbell simulation, metrics,
//! statistics, the experiment matrix and CSV emission.

pub mod demo;
pub mod emit;
pub mod matrix;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod validate;

pub use matrix::{CellSummary, MatrixSpec, RunRecord};
pub use metrics::{fairness_ratio, rolling_bandwidth, run_scenario, RunResult};
pub use scenario::{ScenarioConfig, Variant};
pub use sim::{simulate, SimConfig, SimOutcome};
pub use stats::{aggregate, ComparisonStats};
