//! The federation protocol as pure state machines.
//!
//! Stage one (vocabulary consensus): every client registers and uploads its
//! vocabulary; once all `L` vocabularies are in, the server merges them,
//! initializes the global weights and broadcasts both. Stage two (training):
//! each round every client uploads the mean gradient of its next mini-batch;
//! the server waits for all `L`, averages them weighted by batch size, takes
//! one gradient step and broadcasts the new weights.
//!
//! Neither state machine does I/O; drivers live in [`crate::transport`].

mod centralized;
mod client;
mod local;
mod message;
mod schedule;
mod server;
mod update;

pub use centralized::{run_centralized, CentralizedRun};
pub use client::{ClientConfig, ClientPhase, ClientState};
pub use local::{train_local, LocalConfig, LocalRun};
pub use message::FedMessage;
pub use schedule::{client_streams, BatchSchedule};
pub use server::{Outbound, ServerConfig, ServerPhase, ServerState};
pub use update::{aggregate, apply_update, check_stopping, relative_change, StopRule, TrainConfig};

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("{message} is not valid while the {role} is {phase}")]
    WrongPhase {
        role: &'static str,
        phase: &'static str,
        message: &'static str,
    },
    #[error("unknown client id {0}")]
    UnknownClient(u32),
    #[error("client {0} registered twice")]
    DuplicateRegistration(u32),
    #[error("client {0} sent a vocabulary before registering")]
    NotRegistered(u32),
    #[error("client {0} sent its vocabulary twice")]
    DuplicateVocabulary(u32),
    #[error("client {client} sent two gradients for round {round}")]
    DuplicateGradient { client: u32, round: u32 },
    #[error("expected round {expected}, got {got}")]
    RoundMismatch { expected: u32, got: u32 },
    #[error("payload does not match the model layout: {0}")]
    Layout(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum FedError {
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub type Result<T, E = FedError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests;
