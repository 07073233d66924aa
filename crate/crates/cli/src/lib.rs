//! Scenario runner for `accelfront`: reads TOML scenarios, runs simulations
//! and diagnostic suites, and writes CSV artifacts with a hashed manifest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod run;
pub mod sweep;

pub use config::{ConfigError, Loaded, Scenario};
pub use run::{run_scenario, Command, Outcome, Status};
pub use sweep::{members, run_sweep, SweepError, SweepReport};
