//! Command implementations behind the `chartattrib` binary.

pub mod config;
pub mod evaluate;
pub mod fsio;
pub mod run;
pub mod samples;
pub mod synth;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    BadFile { path: PathBuf, message: String },
    #[error("replay cache miss for transcript key {key}")]
    CacheMiss { key: String },
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn bad_file(path: &Path, message: impl ToString) -> Self {
        CliError::BadFile { path: path.to_path_buf(), message: message.to_string() }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
