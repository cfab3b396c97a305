//! Experiment harness for the `ssfl` simulator: config files, the
//! (variant, seed) run grid and result files.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{DatasetConfig, ExperimentConfig, Format, MaskStudyConfig, OutputConfig, Precision};
pub use output::{write_bundle, write_mask_study};
pub use runner::{run_config, run_experiment, run_mask_study, ResultBundle, RunRecord};
