//! Experiment harness: stream generators, exact oracles, seeded runs and
//! CSV output for the mechanisms in `dpstream-core`.

pub mod config;
pub mod exec;
pub mod oracle;
pub mod output;
pub mod runner;
pub mod streams;

pub use config::{Config, ConfigError};
pub use exec::Exec;
pub use runner::{run_experiment, summarize, RunRecord, Summary};
