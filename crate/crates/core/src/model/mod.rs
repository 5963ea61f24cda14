//! ProdLDA and CombinedTM.
//!
//! The encoder maps a bag of words (concatenated with a contextual document
//! embedding for CombinedTM) through softplus layers to the mean and
//! log-variance of a diagonal Gaussian. A reparameterized sample, dropout and
//! a softmax give the topic proportions `theta`; the decoder scores words with
//! `softmax(normalize(theta . B))`, a weighted product of experts. The loss is
//! the negative ELBO averaged over the mini-batch, with the KL term taken
//! against the Laplace approximation of a symmetric Dirichlet prior.
//!
//! Gradients are derived by hand and checked against central differences in
//! [`fd_gradient`].

mod checkpoint;
mod gradcheck;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, read_config, save_checkpoint, write_config, Checkpoint};
pub use gradcheck::{central_difference, fd_gradient};
pub use network::{backward, forward, forward_sampled, get_beta, infer_theta, Cache, MiniBatch, Mode, Noise};
pub use params::{init_weights, Block, BlockKind, GradientVector, Layout, ModelWeights, BN_EPS, BN_MOMENTUM};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    ProdLda,
    Combined,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::ProdLda => "prodlda",
            Variant::Combined => "combined",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prodlda" => Ok(Variant::ProdLda),
            "combined" => Ok(Variant::Combined),
            other => Err(ModelError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub topics: usize,
    pub vocab_size: usize,
    pub variant: Variant,
    /// Contextual embedding width; only read for [`Variant::Combined`].
    pub embed_dim: usize,
    pub hidden_sizes: Vec<usize>,
    /// Dropout rate applied to the sampled latent before the softmax.
    pub dropout: f64,
    /// Symmetric Dirichlet concentration of the prior.
    pub prior_alpha: f64,
    pub learn_priors: bool,
    pub batch_norm: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// ProdLDA defaults: two hidden layers of 100 units, dropout 0.2,
    /// prior concentration `1/K`, shift-only batch normalization.
    pub fn new(topics: usize, vocab_size: usize) -> Self {
        Self {
            topics,
            vocab_size,
            variant: Variant::ProdLda,
            embed_dim: 0,
            hidden_sizes: vec![100, 100],
            dropout: 0.2,
            prior_alpha: 1.0 / topics.max(1) as f64,
            learn_priors: false,
            batch_norm: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |m: String| Err(ModelError::Config(m));
        if self.topics < 2 {
            return fail(format!("need at least 2 topics, got {}", self.topics));
        }
        if self.vocab_size == 0 {
            return fail("vocabulary is empty".into());
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return fail("hidden_sizes must be nonempty and positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.prior_alpha > 0.0 && self.prior_alpha.is_finite()) {
            return fail(format!("prior_alpha must be positive, got {}", self.prior_alpha));
        }
        if self.variant == Variant::Combined && self.embed_dim == 0 {
            return fail("the combined variant needs embed_dim > 0".into());
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self.variant {
            Variant::ProdLda => self.vocab_size,
            Variant::Combined => self.vocab_size + self.embed_dim,
        }
    }

    /// Laplace approximation of a symmetric Dirichlet(alpha) in softmax basis:
    /// `mu0_k = ln a_k - mean_j ln a_j`,
    /// `var0_k = (1/a_k)(1 - 2/K) + (1/K^2) sum_j 1/a_j`.
    pub fn prior_moments(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.topics as f64;
        let a = self.prior_alpha;
        let mean = vec![a.ln() - a.ln(); self.topics];
        let var = (1.0 / a) * (1.0 - 2.0 / k) + (1.0 / (k * k)) * (k / a);
        (mean, vec![var; self.topics])
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite loss; first non-finite values in block {block}")]
    NonFinite { block: String },
    #[error("weights do not match the model layout: {0}")]
    Layout(String),
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prior_moments_symmetric() {
        let cfg = ModelConfig::new(12, 10);
        let (m, v) = cfg.prior_moments();
        assert!(m.iter().all(|&x| x == 0.0));
        // alpha = 1/K: var = K(1 - 2/K) + 1 = K - 1
        assert!(v.iter().all(|&x| (x - 11.0).abs() < 1e-12));
        let cfg = ModelConfig {
            prior_alpha: 1.0,
            ..ModelConfig::new(4, 10)
        };
        assert!((cfg.prior_moments().1[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(5, 50).validate().is_ok());
        assert!(ModelConfig::new(1, 50).validate().is_err());
        let mut c = ModelConfig::new(5, 50);
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(5, 50);
        c.hidden_sizes.clear();
        assert!(c.validate().is_err());
        let mut c = ModelConfig::new(5, 50);
        c.variant = Variant::Combined;
        assert!(c.validate().is_err());
        c.embed_dim = 8;
        assert!(c.validate().is_ok());
        assert_eq!(c.input_dim(), 58);
    }
}
