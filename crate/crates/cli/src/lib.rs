//! Experiment runner: configuration, the shift pipeline, output writers and
//! checkpoints.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use pipeline::{run_pipeline, PipelineReport};
