use std::sync::Arc;

use super::{FedError, Result};
use crate::model::{BlockKind, GradientVector, ModelWeights, BN_MOMENTUM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    /// Maximum number of synchronized rounds `I`.
    pub max_rounds: usize,
    /// Threshold on the relative weight change.
    pub eps: f64,
    /// Number of consecutive rounds that must fall below `eps`.
    pub patience: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_rounds: 100,
            eps: 1e-5,
            patience: 3,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(FedError::Config(format!("eps_stop must be positive, got {}", self.eps)));
        }
        if self.patience == 0 {
            return Err(FedError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }

    pub fn should_stop(&self, history: &[f64], round: usize) -> bool {
        check_stopping(history, self.eps, self.patience, round, self.max_rounds)
    }
}

/// Hyperparameters of synchronized training, shared by the federated and
/// centralized runs so that the latter can replay the former.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stop: StopRule,
    /// Run seed; client `l` derives its batch order and noise from `seed + l`.
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FedError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(FedError::Config("batch size must be positive".into()));
        }
        self.stop.validate()
    }
}

/// Sample-weighted mean `sum n_l G_l / sum n_l`, accumulated in the given
/// order as an incremental weighted mean, so equal inputs come back exactly.
pub fn aggregate(grads: &[GradientVector]) -> Result<GradientVector> {
    let Some(first) = grads.first() else {
        return Err(FedError::Config("nothing to aggregate".into()));
    };
    let layout = first.layout();
    if let Some(g) = grads.iter().find(|g| !Arc::ptr_eq(g.layout(), layout) && g.layout() != layout) {
        return Err(FedError::Model(crate::model::ModelError::Layout(format!(
            "gradient of {} values does not match layout of {}",
            g.data().len(),
            layout.total()
        ))));
    }
    let mut mean = first.data().to_vec();
    let mut total = first.n_samples();
    for g in &grads[1..] {
        total += g.n_samples();
        let w = g.n_samples() as f64 / total as f64;
        for (m, &x) in mean.iter_mut().zip(g.data()) {
            *m += w * (x - *m);
        }
    }
    Ok(GradientVector::from_vec(layout.clone(), mean, total)?)
}

/// `W - lambda * G` on trainable blocks. Running-statistic blocks move
/// towards the aggregated batch statistic: `(1 - m) W + m G`.
pub fn apply_update(weights: &ModelWeights, grad: &GradientVector, lambda: f64) -> Result<ModelWeights> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(FedError::Config(format!("learning rate must be positive, got {lambda}")));
    }
    if !Arc::ptr_eq(weights.layout(), grad.layout()) && weights.layout() != grad.layout() {
        return Err(FedError::Model(crate::model::ModelError::Layout(
            "gradient and weights have different layouts".into(),
        )));
    }
    let mut out = weights.clone();
    for block in weights.layout().blocks() {
        let range = block.range();
        let w = &mut out.data_mut()[range.clone()];
        let g = &grad.data()[range];
        match block.kind {
            BlockKind::Param => w.iter_mut().zip(g).for_each(|(w, g)| *w -= lambda * g),
            BlockKind::RunningStat => w
                .iter_mut()
                .zip(g)
                .for_each(|(w, g)| *w = (1.0 - BN_MOMENTUM) * *w + BN_MOMENTUM * g),
        }
    }
    Ok(out)
}

/// `||new - old|| / max(||old||, 1e-12)` over trainable blocks.
pub fn relative_change(old: &ModelWeights, new: &ModelWeights) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for block in old.layout().blocks().iter().filter(|b| b.kind == BlockKind::Param) {
        for (a, b) in old.data()[block.range()].iter().zip(&new.data()[block.range()]) {
            diff += (b - a) * (b - a);
            norm += a * a;
        }
    }
    diff.sqrt() / norm.sqrt().max(1e-12)
}

/// Stop once `round >= max_rounds`, or when the last `patience` relative
/// weight changes are all below `eps`.
pub fn check_stopping(history: &[f64], eps: f64, patience: usize, round: usize, max_rounds: usize) -> bool {
    if round >= max_rounds {
        return true;
    }
    patience > 0 && history.len() >= patience && history[history.len() - patience..].iter().all(|&c| c < eps)
}
