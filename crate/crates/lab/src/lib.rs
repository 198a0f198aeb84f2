//! Experiment runner, report emission and acceptance verifier for
//! `spma-core`.

pub mod config;
pub mod experiment;
pub mod instances;
pub mod report;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, CellKey, CellResult, ResultSet, Sweep};
pub use report::{emit_report, load_results, ReportError};
