use std::path::PathBuf;

use suitein_core::{DataError, EvalError, NetworkError, SimError, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NON_FINITE: u8 = 4;

fn data_code(e: &DataError) -> u8 {
    match e {
        DataError::Io { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad configuration, input or shapes, 3 for I/O, 4 when training
    /// diverged.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Network(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Sim(e) => match e {
                SimError::Io { .. } => EXIT_IO,
                SimError::Data(d) => data_code(d),
                SimError::Config(_) => EXIT_CONFIG,
            },
            CliError::Data(d) => data_code(d),
            CliError::Train(e) => match e {
                TrainError::NonFinite { .. } => EXIT_NON_FINITE,
                TrainError::Io { .. } => EXIT_IO,
                TrainError::Data(d) => data_code(d),
                _ => EXIT_CONFIG,
            },
            CliError::Eval(e) => match e {
                EvalError::Io { .. } => EXIT_IO,
                EvalError::Data(d) => data_code(d),
                _ => EXIT_CONFIG,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
