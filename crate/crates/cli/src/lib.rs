//! Scenario runner for the `phasekin` command.

pub mod analytic;
mod common;
pub mod config;
pub mod error;
pub mod output;
mod plots;
pub mod report;
pub mod simulate;
pub mod verify;

pub use analytic::run_analytic;
pub use config::ScenarioConfig;
pub use error::CliError;
pub use simulate::{run_simulate, Check};
pub use verify::{run_checks, Shim};
