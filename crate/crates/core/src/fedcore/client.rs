use std::sync::Arc;

use super::schedule::{client_streams, BatchSchedule};
use super::{FedError, FedMessage, ProtocolError, Result};
use crate::corpus::{remap_corpus, BowCorpus, Vocabulary};
use crate::model::{backward, forward, GradientVector, Layout, MiniBatch, ModelConfig, ModelWeights, Mode, Noise};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub client_id: u32,
    pub batch_size: usize,
    /// Run seed shared by all clients.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientPhase {
    Idle,
    AwaitingInit,
    Training,
    AwaitingDone,
    Finished,
}

impl ClientPhase {
    fn name(self) -> &'static str {
        match self {
            ClientPhase::Idle => "idle",
            ClientPhase::AwaitingInit => "awaiting init",
            ClientPhase::Training => "training",
            ClientPhase::AwaitingDone => "awaiting done",
            ClientPhase::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Session {
    vocab: Vocabulary,
    model: ModelConfig,
    corpus: BowCorpus,
    weights: ModelWeights,
}

/// One node of the federation: owns a private corpus and turns server
/// messages into replies.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    config: ClientConfig,
    corpus: BowCorpus,
    phase: ClientPhase,
    session: Option<Session>,
    round: u32,
    schedule: BatchSchedule,
    noise_rng: Rng,
    losses: Vec<f64>,
}

/// Mean gradient and loss of `model` on `indices` of `corpus`, drawing
/// reparameterization and dropout noise from `noise_rng`.
pub(crate) fn batch_gradient(
    weights: &ModelWeights,
    model: &ModelConfig,
    corpus: &BowCorpus,
    indices: &[usize],
    noise_rng: &mut Rng,
) -> Result<(GradientVector, f64)> {
    let batch = MiniBatch::from_corpus(corpus, indices);
    let noise = Noise::sample(batch.n(), model, noise_rng);
    let (loss, cache) = forward(weights, &batch, model, Mode::Train(&noise))?;
    Ok((backward(&cache), loss))
}

impl ClientState {
    pub fn new(config: ClientConfig, corpus: BowCorpus) -> Result<Self> {
        if corpus.is_empty() {
            return Err(FedError::Config(format!("client {} has no documents", config.client_id)));
        }
        if config.batch_size == 0 {
            return Err(FedError::Config("batch size must be positive".into()));
        }
        let (batch_rng, noise_rng) = client_streams(config.seed, config.client_id);
        Ok(Self {
            schedule: BatchSchedule::new(corpus.len(), config.batch_size, batch_rng),
            noise_rng,
            config,
            corpus,
            phase: ClientPhase::Idle,
            session: None,
            round: 0,
            losses: Vec::new(),
        })
    }

    pub fn id(&self) -> u32 {
        self.config.client_id
    }

    pub fn phase(&self) -> ClientPhase {
        self.phase
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Training loss of every round this client took part in.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn weights(&self) -> Option<&ModelWeights> {
        self.session.as_ref().map(|s| &s.weights)
    }

    pub fn model_config(&self) -> Option<&ModelConfig> {
        self.session.as_ref().map(|s| &s.model)
    }

    pub fn global_vocab(&self) -> Option<&Vocabulary> {
        self.session.as_ref().map(|s| &s.vocab)
    }

    pub fn is_finished(&self) -> bool {
        self.phase == ClientPhase::Finished
    }

    /// Opening messages: registration and the local vocabulary.
    pub fn start(&mut self) -> Result<Vec<FedMessage>> {
        if self.phase != ClientPhase::Idle {
            return Err(self.wrong_phase("start").into());
        }
        self.phase = ClientPhase::AwaitingInit;
        let id = self.config.client_id;
        Ok(vec![
            FedMessage::Register { client_id: id },
            FedMessage::VocabUpload {
                client_id: id,
                vocab: self.corpus.vocab().clone(),
            },
        ])
    }

    /// Reacts to one server message. On error the state is left unchanged.
    pub fn handle(&mut self, msg: FedMessage) -> Result<Vec<FedMessage>> {
        match (self.phase, msg) {
            (ClientPhase::AwaitingInit, FedMessage::GlobalInit { vocab, config, weights }) => {
                config.validate()?;
                if config.vocab_size != vocab.len() {
                    return Err(ProtocolError::Layout(format!(
                        "model expects {} terms but the vocabulary has {}",
                        config.vocab_size,
                        vocab.len()
                    ))
                    .into());
                }
                let layout = Arc::new(Layout::for_config(&config));
                let weights = weights_for(layout, weights)?;
                let corpus = remap_corpus(&self.corpus, &vocab)?;
                let session = Session {
                    vocab,
                    model: config,
                    corpus,
                    weights,
                };
                let reply = self.step(&session)?;
                self.session = Some(session);
                self.phase = ClientPhase::Training;
                Ok(vec![reply])
            }
            (ClientPhase::Training, FedMessage::GlobalUpdate { round, proceed, weights }) => {
                if round != self.round + 1 {
                    return Err(ProtocolError::RoundMismatch {
                        expected: self.round + 1,
                        got: round,
                    }
                    .into());
                }
                let mut session = self.session.clone().expect("training without a session");
                session.weights = weights_for(session.weights.layout().clone(), weights)?;
                self.round = round;
                if proceed {
                    let reply = match self.step(&session) {
                        Ok(r) => r,
                        Err(e) => {
                            self.round -= 1;
                            return Err(e);
                        }
                    };
                    self.session = Some(session);
                    Ok(vec![reply])
                } else {
                    self.session = Some(session);
                    self.phase = ClientPhase::AwaitingDone;
                    Ok(Vec::new())
                }
            }
            (ClientPhase::AwaitingDone, FedMessage::Done { round }) => {
                if round != self.round {
                    return Err(ProtocolError::RoundMismatch {
                        expected: self.round,
                        got: round,
                    }
                    .into());
                }
                self.phase = ClientPhase::Finished;
                Ok(Vec::new())
            }
            (_, msg) => Err(self.wrong_phase(msg.kind()).into()),
        }
    }

    /// Gradient of the next mini-batch at the session weights; commits the
    /// generator state only on success.
    fn step(&mut self, session: &Session) -> Result<FedMessage> {
        let mut schedule = self.schedule.clone();
        let mut noise_rng = self.noise_rng.clone();
        let indices = schedule.next_batch();
        let (grad, loss) = batch_gradient(&session.weights, &session.model, &session.corpus, &indices, &mut noise_rng)?;
        self.schedule = schedule;
        self.noise_rng = noise_rng;
        self.losses.push(loss);
        Ok(FedMessage::GradientUpload {
            client_id: self.config.client_id,
            round: self.round,
            n_samples: grad.n_samples() as u32,
            gradient: grad.into_vec(),
        })
    }

    fn wrong_phase(&self, message: &'static str) -> ProtocolError {
        ProtocolError::WrongPhase {
            role: "client",
            phase: self.phase.name(),
            message,
        }
    }
}

fn weights_for(layout: Arc<Layout>, data: Vec<f64>) -> Result<ModelWeights> {
    if data.len() != layout.total() {
        return Err(ProtocolError::Layout(format!("{} weights for a layout of {}", data.len(), layout.total())).into());
    }
    Ok(ModelWeights::from_vec(layout, data)?)
}
