//! Command-line front-end for maskpipe: preprocessing, splitting, cohort
//! summaries, evaluation, threshold tuning, TTA selection, snapshot
//! averaging and report rendering.

pub mod commands;
pub mod config;
pub mod data;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod predictors;
pub mod render;
pub mod report;

pub use commands::{run, Command};
pub use config::RunConfig;
pub use error::{CliError, CliResult};
