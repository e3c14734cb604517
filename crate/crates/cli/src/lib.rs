//! Command-line harness: plan generation, seeded evaluation runs and
//! ablation grids, with JSON, CSV and text reports.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod error;
pub mod harness;
pub mod report;

pub use commands::{ablate, evaluate, generate, Cli};
pub use error::CliError;
