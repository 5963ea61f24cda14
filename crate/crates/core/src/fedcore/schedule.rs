use rand::seq::SliceRandom;

use crate::rng::{self, streams, Rng};

/// Endless sequence of mini-batches over `0..n_docs`: each epoch is a fresh
/// permutation cut into batches of `batch_size`, the last one possibly short.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSchedule {
    batch_size: usize,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    rng: Rng,
}

impl BatchSchedule {
    pub fn new(n_docs: usize, batch_size: usize, rng: Rng) -> Self {
        assert!(n_docs > 0 && batch_size > 0, "empty batch schedule");
        Self {
            batch_size,
            order: (0..n_docs).collect(),
            cursor: n_docs,
            epoch: 0,
            rng,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// Number of epochs started so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// Batch-order and noise generators of client `client_id` under `run_seed`.
pub fn client_streams(run_seed: u64, client_id: u32) -> (Rng, Rng) {
    let seed = run_seed.wrapping_add(client_id as u64);
    (rng::stream(seed, streams::CLIENT_BATCHES), rng::stream(seed, streams::CLIENT_NOISE))
}
