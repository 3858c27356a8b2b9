use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Args(#[from] clap::Error),

    #[error("unknown key '{0}'")]
    UnknownKey(String),

    #[error("malformed config: {0}")]
    Syntax(String),

    #[error("invalid value '{value}' for '{key}': {reason}")]
    Invalid { key: String, value: String, reason: String },

    #[error("conflicting settings: {0}")]
    Conflict(String),

    #[error("no records to write")]
    EmptyRecords,

    #[error("cannot read {}: {source}", path.display())]
    Unreadable { path: PathBuf, source: std::io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Unwritable { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Solver(#[from] gradrobust::Error),
}

impl CliError {
    /// Process exit status. 1 is reserved for runs that did not converge.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Args(e) if !e.use_stderr() => 0,
            CliError::Args(_) | CliError::UnknownKey(_) | CliError::Syntax(_) => 2,
            CliError::Invalid { .. } | CliError::Conflict(_) | CliError::EmptyRecords => 3,
            CliError::Unreadable { .. } => 4,
            CliError::Unwritable { .. } => 5,
            CliError::Solver(_) => 6,
        }
    }
}
