use rand::seq::SliceRandom;

use super::centralized::sgd_step;
use super::schedule::BatchSchedule;
use super::{FedError, Result};
use crate::corpus::{BowCorpus, Vocabulary};
use crate::model::{forward, init_weights, MiniBatch, ModelConfig, ModelWeights, Mode};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of documents held out for early stopping.
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-3,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            valid_fraction: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalRun {
    pub vocab: Vocabulary,
    pub config: ModelConfig,
    /// Weights of the epoch with the lowest validation loss.
    pub weights: ModelWeights,
    pub epochs: usize,
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
}

/// Mean evaluation-mode loss over `indices`.
pub(crate) fn eval_loss(weights: &ModelWeights, config: &ModelConfig, corpus: &BowCorpus, indices: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in indices.chunks(256) {
        let batch = MiniBatch::from_corpus(corpus, chunk);
        let (loss, _) = forward(weights, &batch, config, Mode::Eval)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Trains on one corpus alone, with early stopping on a held-out split.
pub fn train_local(corpus: &BowCorpus, model: &ModelConfig, cfg: &LocalConfig) -> Result<LocalRun> {
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(FedError::Config(format!("learning rate must be positive, got {}", cfg.learning_rate)));
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(FedError::Config("batch size and epochs must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.valid_fraction) {
        return Err(FedError::Config(format!("validation fraction must lie in [0, 1), got {}", cfg.valid_fraction)));
    }
    let mut config = model.clone();
    config.vocab_size = corpus.vocab().len();
    let mut weights = init_weights(&config)?;

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, streams::SPLIT));
    let n_valid = (corpus.len() as f64 * cfg.valid_fraction).round() as usize;
    let (valid_idx, train_idx) = order.split_at(n_valid);
    if train_idx.is_empty() {
        return Err(FedError::Config("no training documents left after the split".into()));
    }
    let train = corpus.subset(train_idx);

    let mut schedule = BatchSchedule::new(train.len(), cfg.batch_size, rng::stream(cfg.seed, streams::CLIENT_BATCHES));
    let mut noise_rng = rng::stream(cfg.seed, streams::CLIENT_NOISE);
    let mut best = (f64::INFINITY, weights.clone(), 0);
    let mut train_losses = Vec::new();
    let mut valid_losses = Vec::new();
    let mut epochs = 0;
    while epochs < cfg.max_epochs {
        let mut sum = 0.0;
        for _ in 0..schedule.batches_per_epoch() {
            let idx = schedule.next_batch();
            let (next, loss) = sgd_step(&weights, &config, &train, &idx, &mut noise_rng, cfg.learning_rate)?;
            sum += loss * idx.len() as f64;
            weights = next;
        }
        epochs += 1;
        train_losses.push(sum / train.len() as f64);
        if valid_idx.is_empty() {
            best = (0.0, weights.clone(), epochs);
            continue;
        }
        let v = eval_loss(&weights, &config, corpus, valid_idx)?;
        valid_losses.push(v);
        if v < best.0 {
            best = (v, weights.clone(), epochs);
        } else if epochs - best.2 >= cfg.patience {
            break;
        }
    }
    log::debug!("local training stopped after {epochs} epochs, best {}", best.2);
    Ok(LocalRun {
        vocab: corpus.vocab().clone(),
        config,
        weights: best.1,
        epochs,
        best_epoch: best.2,
        train_losses,
        valid_losses,
    })
}
