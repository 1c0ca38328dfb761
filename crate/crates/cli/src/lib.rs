//! Command-line front end: run configuration and the subcommands.

pub mod commands;
pub mod config;

pub use config::RunConfig;
