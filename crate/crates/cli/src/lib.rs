//! Command-line front end for `srn-core`: the textual model format and the
//! `srn` subcommands.

pub mod app;
pub mod model;

pub use app::{execute, run, Cli, CliError};
pub use model::{parse_model, write_model, Model, ModelError};
