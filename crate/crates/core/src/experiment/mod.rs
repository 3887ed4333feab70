//! Seeded experiments: synthetic pools, configs, the trial runner, results
//! documents and plot-data exports.

pub mod config;
pub mod export;
pub mod generator;
pub mod results;
pub mod runner;

pub use config::{Baseline, ExperimentConfig, PoolSource, SearchTemplate, TargetSize};
pub use export::{export_plot_data, read_rows, ExportKind};
pub use generator::{generate_pool, GeneratedPool, GeneratorSpec, SampleMeta};
pub use results::{ResultsFile, RunDocument, TrialRecord};
pub use runner::{load_pools, run_experiment, run_experiment_with_outputs, run_trial, search_config, TrialOutput};
