use std::path::PathBuf;
use std::process::ExitCode;

use osv_core::OsvError;
use thiserror::Error;

/// Process exit statuses, following the BSD `sysexits` numbering.
pub mod exit {
    pub const OK: u8 = 0;
    /// A report was written but at least one estimate did not converge.
    pub const NOT_CONVERGED: u8 = 2;
    pub const USAGE: u8 = 64;
    pub const DATA: u8 = 65;
    pub const NO_INPUT: u8 = 66;
    pub const UNAVAILABLE: u8 = 69;
    pub const IO: u8 = 74;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("cannot read {path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model endpoint failed: {0}")]
    Endpoint(OsvError),

    #[error(transparent)]
    Engine(OsvError),
}

impl From<OsvError> for CliError {
    fn from(e: OsvError) -> Self {
        match e {
            OsvError::Config(m) | OsvError::Unsupported(m) => CliError::Usage(m),
            OsvError::Model(_) | OsvError::Evaluation { .. } => CliError::Endpoint(e),
            other => CliError::Engine(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) => exit::DATA,
            CliError::Input { .. } => exit::NO_INPUT,
            CliError::Output { .. } => exit::IO,
            CliError::Endpoint(_) => exit::UNAVAILABLE,
            CliError::Engine(OsvError::Io(_)) => exit::IO,
            CliError::Engine(_) => exit::DATA,
        })
    }
}
