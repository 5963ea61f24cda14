use std::process::ExitCode;

use fedtopic::corpus::CorpusError;
use fedtopic::eval::EvalError;
use fedtopic::fedcore::FedError;
use fedtopic::model::ModelError;
use fedtopic::synthgen::SynthError;
use fedtopic::transport::TransportError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Transport(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Other(_) => 1,
        })
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            ModelError::Config(_) | ModelError::Dimension(_) => CliError::Config(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<FedError> for CliError {
    fn from(e: FedError) -> Self {
        match e {
            FedError::Config(_) | FedError::Corpus(_) => CliError::Config(e.to_string()),
            FedError::Protocol(_) => CliError::Transport(e.to_string()),
            FedError::Model(m) => m.into(),
        }
    }
}

impl From<TransportError> for CliError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Fed(f) => match f {
                FedError::Protocol(_) => CliError::Transport(f.to_string()),
                other => other.into(),
            },
            other => CliError::Transport(other.to_string()),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(_) => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(_) | EvalError::Csv(_) => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(format!("i/o error: {e}"))
    }
}
