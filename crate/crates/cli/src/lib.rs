//! Command-line front end: scenario files, experiment drivers and the
//! CSV/JSON artifacts they produce.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod scenario;

pub use commands::{run, Cli};
pub use config::ScenarioConfig;
pub use error::CliError;
