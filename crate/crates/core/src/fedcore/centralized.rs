use super::client::batch_gradient;
use super::schedule::{client_streams, BatchSchedule};
use super::update::{apply_update, relative_change, TrainConfig};
use super::{FedError, Result};
use crate::corpus::{merge_vocabularies, remap_corpus, BowCorpus, Vocabulary};
use crate::model::{backward, forward, init_weights, MiniBatch, ModelConfig, ModelError, ModelWeights, Mode, Noise};

#[derive(Debug, Clone)]
pub struct CentralizedRun {
    pub vocab: Vocabulary,
    pub config: ModelConfig,
    pub weights: ModelWeights,
    pub rounds: usize,
    pub history: Vec<f64>,
    /// Pooled training loss of each round.
    pub losses: Vec<f64>,
}

/// Trains on the union of all corpora in one place, replaying exactly the
/// mini-batches and noise the federated clients would draw, so the result is
/// the reference a federated run must reproduce. `max_rounds = 0` returns the
/// initial weights.
pub fn run_centralized(corpora: &[BowCorpus], model: &ModelConfig, train: &TrainConfig) -> Result<CentralizedRun> {
    train.validate()?;
    if corpora.is_empty() {
        return Err(FedError::Config("no corpora to train on".into()));
    }
    let vocabs: Vec<Vocabulary> = corpora.iter().map(|c| c.vocab().clone()).collect();
    let vocab = merge_vocabularies(&vocabs)?;
    let mut config = model.clone();
    config.vocab_size = vocab.len();
    let mut weights = init_weights(&config)?;

    let mut nodes = Vec::with_capacity(corpora.len());
    for (id, corpus) in corpora.iter().enumerate() {
        if corpus.is_empty() {
            return Err(FedError::Config(format!("corpus {id} has no documents")));
        }
        let local = remap_corpus(corpus, &vocab)?;
        let (batch_rng, noise_rng) = client_streams(train.seed, id as u32);
        nodes.push((local, BatchSchedule::new(corpus.len(), train.batch_size, batch_rng), noise_rng));
    }

    let mut history = Vec::new();
    let mut losses = Vec::new();
    let mut rounds = 0;
    while !train.stop.should_stop(&history, rounds) {
        let mut batches = Vec::with_capacity(nodes.len());
        let mut noises = Vec::with_capacity(nodes.len());
        for (corpus, schedule, noise_rng) in &mut nodes {
            let batch = MiniBatch::from_corpus(corpus, &schedule.next_batch());
            noises.push(Noise::sample(batch.n(), &config, noise_rng));
            batches.push(batch);
        }
        let batch = MiniBatch::concat(&batches);
        let noise = Noise::concat(&noises);
        let (loss, cache) = forward(&weights, &batch, &config, Mode::Train(&noise))?;
        let next = apply_update(&weights, &backward(&cache), train.learning_rate)?;
        if let Some(block) = next.first_non_finite_block() {
            return Err(ModelError::NonFinite { block: block.to_string() }.into());
        }
        history.push(relative_change(&weights, &next));
        losses.push(loss);
        weights = next;
        rounds += 1;
    }
    Ok(CentralizedRun {
        vocab,
        config,
        weights,
        rounds,
        history,
        losses,
    })
}

/// Single-corpus convenience used by the local trainer.
pub(crate) fn sgd_step(
    weights: &ModelWeights,
    config: &ModelConfig,
    corpus: &BowCorpus,
    indices: &[usize],
    noise_rng: &mut crate::rng::Rng,
    learning_rate: f64,
) -> Result<(ModelWeights, f64)> {
    let (grad, loss) = batch_gradient(weights, config, corpus, indices, noise_rng)?;
    let next = apply_update(weights, &grad, learning_rate)?;
    if let Some(block) = next.first_non_finite_block() {
        return Err(ModelError::NonFinite { block: block.to_string() }.into());
    }
    Ok((next, loss))
}
