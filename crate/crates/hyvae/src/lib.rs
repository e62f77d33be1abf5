//! File formats, configuration and subcommands around `hyvae-core`.

pub mod config;
pub mod error;
pub mod formats;
pub mod input;
pub mod output;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, Result};
