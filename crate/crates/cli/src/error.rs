//! Error classes with stable exit codes, so scripts and CI can branch on
//! what went wrong: 2 = bad invocation or config, 3 = provider failure,
//! 4 = unusable data, 5 = replay verification mismatch, 1 = everything
//! else (I/O and the like).

use bloomloop::dataset::DataError;
use bloomloop::domain::ConfigError;
use bloomloop::llm::LlmError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Invalid flags, config file, or invocation invariants. Exit 2.
    Config(String),
    /// Provider construction or call failure. Exit 3.
    Provider(String),
    /// Dataset or stored-run artifacts unusable. Exit 4.
    Data(String),
    /// Replay verification found a difference. Exit 5.
    ReplayMismatch(String),
    /// Filesystem trouble writing artifacts. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Data(_) => 4,
            CliError::ReplayMismatch(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Provider(m) => write!(f, "provider error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::ReplayMismatch(m) => write!(f, "replay mismatch: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Config(e.to_string())
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> CliError {
        CliError::Provider(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> CliError {
        CliError::Data(e.to_string())
    }
}
