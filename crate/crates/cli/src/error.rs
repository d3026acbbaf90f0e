use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Infeasible(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("trace: {0}")]
    Trace(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Trace(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl From<kinesim_core::Error> for CliError {
    fn from(e: kinesim_core::Error) -> Self {
        use kinesim_core::Error as E;
        match e {
            E::Infeasible(_) => CliError::Infeasible(e.to_string()),
            E::TraceOrder { .. } | E::Format { .. } => CliError::Trace(e.to_string()),
            E::Domain(_) | E::Config(_) | E::InsufficientData(_) => CliError::Usage(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
