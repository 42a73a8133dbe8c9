//! Config-driven experiment runner for the `branchfield` library.

pub mod config;
pub mod run;
pub mod suite;

pub use config::ExperimentConfig;
pub use run::{exit_code, run, Command, Outcome, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, EXIT_RESOURCE};
