//! Command-line front end: configuration, experiment dispatch, and output.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_text, Mode, RunConfig};
pub use error::CliError;
pub use output::{export_fields, write_tables, Fields};
pub use run::run;
