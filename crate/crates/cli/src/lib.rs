//! Command-line front end: run configs, experiment dispatch and output files.

pub mod commands;
pub mod config;
pub mod output;
pub mod selftest;

pub use config::{ConfigError, Mode, RunConfig};
