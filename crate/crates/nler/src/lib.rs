//! Configuration, file formats and subcommands for NLER experiments built
//! on `nler-core`.

pub mod artifact;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod tables;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
