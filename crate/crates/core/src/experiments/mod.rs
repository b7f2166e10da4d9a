//! Experiment driver: configuration, runners, output files and the CLI.

pub mod cli;
pub mod config;
pub mod output;
pub mod runs;
