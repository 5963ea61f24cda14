use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::update::{aggregate, apply_update, relative_change, StopRule};
use super::{FedError, FedMessage, ProtocolError, Result};
use crate::corpus::{merge_vocabularies, Vocabulary};
use crate::model::{init_weights, GradientVector, ModelConfig, ModelError, ModelWeights};

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    /// Number of clients `L`; ids are `0..L`.
    pub clients: u32,
    /// Model template; its vocabulary size is replaced by the merged one.
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub stop: StopRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerPhase {
    AwaitingVocabs,
    Training,
    Done,
}

impl ServerPhase {
    fn name(self) -> &'static str {
        match self {
            ServerPhase::AwaitingVocabs => "awaiting vocabularies",
            ServerPhase::Training => "training",
            ServerPhase::Done => "done",
        }
    }
}

/// A message addressed to one client.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: u32,
    pub msg: FedMessage,
}

#[derive(Debug, Clone, PartialEq)]
struct Global {
    vocab: Vocabulary,
    model: ModelConfig,
    weights: ModelWeights,
}

/// The aggregator. Rounds advance only when every client has uploaded, and
/// aggregation always runs in ascending client order, so the result does not
/// depend on arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    config: ServerConfig,
    phase: ServerPhase,
    registered: BTreeSet<u32>,
    vocabs: BTreeMap<u32, Vocabulary>,
    global: Option<Global>,
    round: u32,
    pending: BTreeMap<u32, GradientVector>,
    history: Vec<f64>,
}

impl ServerState {
    pub fn new(config: ServerConfig) -> Result<Self> {
        if config.clients == 0 {
            return Err(FedError::Config("a federation needs at least one client".into()));
        }
        if config.stop.max_rounds == 0 {
            return Err(FedError::Config("a federated run needs at least one round".into()));
        }
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(FedError::Config(format!("learning rate must be positive, got {}", config.learning_rate)));
        }
        config.stop.validate()?;
        Ok(Self {
            config,
            phase: ServerPhase::AwaitingVocabs,
            registered: BTreeSet::new(),
            vocabs: BTreeMap::new(),
            global: None,
            round: 0,
            pending: BTreeMap::new(),
            history: Vec::new(),
        })
    }

    pub fn phase(&self) -> ServerPhase {
        self.phase
    }

    /// Number of completed rounds.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn clients(&self) -> u32 {
        self.config.clients
    }

    pub fn is_done(&self) -> bool {
        self.phase == ServerPhase::Done
    }

    /// Relative weight change of every completed round.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn weights(&self) -> Option<&ModelWeights> {
        self.global.as_ref().map(|g| &g.weights)
    }

    pub fn vocab(&self) -> Option<&Vocabulary> {
        self.global.as_ref().map(|g| &g.vocab)
    }

    pub fn model_config(&self) -> Option<&ModelConfig> {
        self.global.as_ref().map(|g| &g.model)
    }

    /// Clients whose gradient for the current round has arrived.
    pub fn pending_clients(&self) -> Vec<u32> {
        self.pending.keys().copied().collect()
    }

    /// Processes one client message. On error the state is left unchanged.
    pub fn handle(&mut self, msg: FedMessage) -> Result<Vec<Outbound>> {
        match msg {
            FedMessage::Register { client_id } => {
                self.expect_phase(ServerPhase::AwaitingVocabs, "Register")?;
                self.check_id(client_id)?;
                if !self.registered.insert(client_id) {
                    return Err(ProtocolError::DuplicateRegistration(client_id).into());
                }
                Ok(Vec::new())
            }
            FedMessage::VocabUpload { client_id, vocab } => {
                self.expect_phase(ServerPhase::AwaitingVocabs, "VocabUpload")?;
                self.check_id(client_id)?;
                if !self.registered.contains(&client_id) {
                    return Err(ProtocolError::NotRegistered(client_id).into());
                }
                if self.vocabs.contains_key(&client_id) {
                    return Err(ProtocolError::DuplicateVocabulary(client_id).into());
                }
                if self.vocabs.len() + 1 < self.config.clients as usize {
                    self.vocabs.insert(client_id, vocab);
                    return Ok(Vec::new());
                }
                let mut vocabs = self.vocabs.clone();
                vocabs.insert(client_id, vocab);
                let ordered: Vec<Vocabulary> = vocabs.values().cloned().collect();
                let merged = merge_vocabularies(&ordered)?;
                let mut model = self.config.model.clone();
                model.vocab_size = merged.len();
                let weights = init_weights(&model)?;
                let out = (0..self.config.clients)
                    .map(|to| Outbound {
                        to,
                        msg: FedMessage::GlobalInit {
                            vocab: merged.clone(),
                            config: model.clone(),
                            weights: weights.data().to_vec(),
                        },
                    })
                    .collect();
                self.vocabs = vocabs;
                self.global = Some(Global {
                    vocab: merged,
                    model,
                    weights,
                });
                self.phase = ServerPhase::Training;
                Ok(out)
            }
            FedMessage::GradientUpload {
                client_id,
                round,
                n_samples,
                gradient,
            } => {
                self.expect_phase(ServerPhase::Training, "GradientUpload")?;
                self.check_id(client_id)?;
                if round != self.round {
                    return Err(ProtocolError::RoundMismatch {
                        expected: self.round,
                        got: round,
                    }
                    .into());
                }
                if self.pending.contains_key(&client_id) {
                    return Err(ProtocolError::DuplicateGradient { client: client_id, round }.into());
                }
                if n_samples == 0 {
                    return Err(ProtocolError::Invalid(format!("client {client_id} reported an empty batch")).into());
                }
                let global = self.global.as_ref().expect("training without global state");
                let layout = global.weights.layout();
                if gradient.len() != layout.total() {
                    return Err(ProtocolError::Layout(format!(
                        "gradient of {} values for a layout of {}",
                        gradient.len(),
                        layout.total()
                    ))
                    .into());
                }
                let grad = GradientVector::from_vec(Arc::clone(layout), gradient, n_samples as usize)?;
                if self.pending.len() + 1 < self.config.clients as usize {
                    self.pending.insert(client_id, grad);
                    return Ok(Vec::new());
                }
                let mut pending = std::mem::take(&mut self.pending);
                pending.insert(client_id, grad);
                let result = self.finish_round(&pending);
                if result.is_err() {
                    pending.remove(&client_id);
                    self.pending = pending;
                }
                result
            }
            other => Err(ProtocolError::Invalid(format!("the server does not accept {}", other.kind())).into()),
        }
    }

    fn finish_round(&mut self, pending: &BTreeMap<u32, GradientVector>) -> Result<Vec<Outbound>> {
        let global = self.global.as_ref().expect("training without global state");
        let grads: Vec<GradientVector> = pending.values().cloned().collect();
        let agg = aggregate(&grads)?;
        let next = apply_update(&global.weights, &agg, self.config.learning_rate)?;
        if let Some(block) = next.first_non_finite_block() {
            return Err(ModelError::NonFinite { block: block.to_string() }.into());
        }
        let change = relative_change(&global.weights, &next);
        let round = self.round + 1;
        let mut history = self.history.clone();
        history.push(change);
        let stop = self.config.stop.should_stop(&history, round as usize);
        let mut out: Vec<Outbound> = (0..self.config.clients)
            .map(|to| Outbound {
                to,
                msg: FedMessage::GlobalUpdate {
                    round,
                    proceed: !stop,
                    weights: next.data().to_vec(),
                },
            })
            .collect();
        if stop {
            out.extend((0..self.config.clients).map(|to| Outbound {
                to,
                msg: FedMessage::Done { round },
            }));
            self.phase = ServerPhase::Done;
        }
        log::debug!("round {round}: relative change {change:.3e}");
        self.history = history;
        self.round = round;
        self.global.as_mut().expect("global state").weights = next;
        Ok(out)
    }

    fn expect_phase(&self, phase: ServerPhase, message: &'static str) -> Result<(), ProtocolError> {
        if self.phase != phase {
            return Err(ProtocolError::WrongPhase {
                role: "server",
                phase: self.phase.name(),
                message,
            });
        }
        Ok(())
    }

    fn check_id(&self, id: u32) -> Result<(), ProtocolError> {
        if id >= self.config.clients {
            return Err(ProtocolError::UnknownClient(id));
        }
        Ok(())
    }
}
