//! Configuration, file formats and workflows for the `aqua` command-line tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod manifest;

pub use commands::{cmd_eval, cmd_restore, cmd_synth, cmd_train, EvalOutcome, TrainOutcome};
pub use config::{ConfigError, RunConfig};
