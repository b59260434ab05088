//! Experiment harness around `mmab-sa`: scenario presets and TOML configs,
//! seeded multi-run sweeps on a worker pool, aggregation and CSV/TOML output.

pub mod error;
pub mod experiment;
pub mod output;
pub mod scenario;

pub use error::HarnessError;
pub use experiment::{run_experiment, run_trace, Aggregate, ExperimentResult, RunRecord};
pub use scenario::{preset, preset_names, presets, Algorithm, MeansSpec, Scenario};
