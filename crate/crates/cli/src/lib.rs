//! The `geocurate` pipeline: configuration, stage DAG, run manifest and the
//! command-line front end.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use cli::{run, Cli};
pub use config::PipelineConfig;
pub use error::CliError;
pub use stages::Runner;
