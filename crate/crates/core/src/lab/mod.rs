//! Experiment runner: configuration, output files and the commands that tie
//! the modules together.

mod commands;
mod config;
mod output;

pub use commands::*;
pub use config::*;
pub use output::*;
