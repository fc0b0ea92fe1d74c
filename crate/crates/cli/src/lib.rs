//! File formats, corpus directories and the `discourse-chain` command line.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod jsonl;
pub mod pipeline;
pub mod report;

pub use commands::run_command;
pub use config::RunConfig;
pub use error::CliError;
