//! Experiment runner for `bosedyn`: JSON configuration, pipelines for each
//! mode, and the manifest/CSV/JSON artifacts they write.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Mode};
pub use run::{execute, resolve_output_dir, Command, RunManifest, RunOutcome, Status};
