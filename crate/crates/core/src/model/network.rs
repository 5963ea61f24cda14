//! Forward pass, loss and hand-derived backward pass.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis, Zip};
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::params::{NormSlots, BN_EPS};
use super::{GradientVector, Layout, ModelConfig, ModelError, ModelWeights, Result, Variant};
use crate::corpus::BowCorpus;
use crate::rng::Rng;

/// Dense mini-batch: `[n x V]` counts plus `[n x E]` embeddings for CombinedTM.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch {
    pub bow: Array2<f64>,
    pub embeds: Option<Array2<f64>>,
}

impl MiniBatch {
    pub fn new(bow: Array2<f64>, embeds: Option<Array2<f64>>) -> Self {
        Self { bow, embeds }
    }

    pub fn from_corpus(corpus: &BowCorpus, indices: &[usize]) -> Self {
        Self {
            bow: corpus.dense_counts(indices),
            embeds: corpus.embeddings().map(|e| e.select(Axis(0), indices)),
        }
    }

    pub fn n(&self) -> usize {
        self.bow.nrows()
    }

    /// Stacks batches row-wise in the given order.
    pub fn concat(parts: &[MiniBatch]) -> Self {
        let bows: Vec<_> = parts.iter().map(|p| p.bow.view()).collect();
        let embeds = if parts.iter().all(|p| p.embeds.is_some()) && !parts.is_empty() {
            let views: Vec<_> = parts.iter().map(|p| p.embeds.as_ref().unwrap().view()).collect();
            Some(concatenate(Axis(0), &views).expect("equal embedding widths"))
        } else {
            None
        };
        Self {
            bow: concatenate(Axis(0), &bows).expect("equal vocabulary widths"),
            embeds,
        }
    }
}

/// Random inputs of one training forward pass: the reparameterization noise
/// and the inverted-dropout multipliers (`0` or `1/(1-p)`), both `[n x K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub eps: Array2<f64>,
    pub keep: Array2<f64>,
}

impl Noise {
    /// Draws all `eps` values row-major, then all dropout decisions.
    pub fn sample(n: usize, cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let k = cfg.topics;
        let eps = Array2::from_shape_simple_fn((n, k), || rng.sample::<f64, _>(StandardNormal));
        let keep = if cfg.dropout > 0.0 {
            let scale = 1.0 / (1.0 - cfg.dropout);
            Array2::from_shape_simple_fn((n, k), || if rng.random::<f64>() < cfg.dropout { 0.0 } else { scale })
        } else {
            Array2::ones((n, k))
        };
        Self { eps, keep }
    }

    /// No sampling noise and no dropout.
    pub fn none(n: usize, topics: usize) -> Self {
        Self {
            eps: Array2::zeros((n, topics)),
            keep: Array2::ones((n, topics)),
        }
    }

    pub fn concat(parts: &[Noise]) -> Self {
        let eps: Vec<_> = parts.iter().map(|p| p.eps.view()).collect();
        let keep: Vec<_> = parts.iter().map(|p| p.keep.view()).collect();
        Self {
            eps: concatenate(Axis(0), &eps).expect("equal topic counts"),
            keep: concatenate(Axis(0), &keep).expect("equal topic counts"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    /// Sampled latent, dropout, batch statistics in normalization layers.
    Train(&'a Noise),
    /// `z = mu`, no dropout, running statistics in normalization layers.
    Eval,
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
    train: bool,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    layout: std::sync::Arc<Layout>,
    weights: Vec<f64>,
    train: bool,
    counts: Array2<f64>,
    doc_len: Array1<f64>,
    activations: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    mu_norm: Option<NormCache>,
    logvar_norm: Option<NormCache>,
    beta_norm: Option<NormCache>,
    mu: Array2<f64>,
    logvar: Array2<f64>,
    eps: Array2<f64>,
    keep: Array2<f64>,
    theta: Array2<f64>,
    probs: Array2<f64>,
    prior_mean: Array1<f64>,
    prior_var: Array1<f64>,
    recon: Array1<f64>,
    kl: Array1<f64>,
    loss: f64,
}

impl Cache {
    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn n(&self) -> usize {
        self.counts.nrows()
    }

    /// Per-document reconstruction term `-sum_v x_v log p_v`.
    pub fn recon(&self) -> &Array1<f64> {
        &self.recon
    }

    /// Per-document KL divergence to the prior.
    pub fn kl(&self) -> &Array1<f64> {
        &self.kl
    }

    pub fn theta(&self) -> &Array2<f64> {
        &self.theta
    }

    pub fn mu(&self) -> &Array2<f64> {
        &self.mu
    }

    pub fn logvar(&self) -> &Array2<f64> {
        &self.logvar
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

fn affine(x: &Array2<f64>, w: ndarray::ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut a = x.dot(&w);
    a += &b;
    a
}

fn norm_forward(
    x: &Array2<f64>,
    weights: &ModelWeights,
    slots: NormSlots,
    train: bool,
) -> (Array2<f64>, NormCache) {
    let n = x.nrows() as f64;
    let (mean, var) = if train {
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = x - &mean;
        let var = centered.mapv(|c| c * c).sum_axis(Axis(0)) / n;
        (mean, var)
    } else {
        (weights.vec(slots.running_mean).to_owned(), weights.vec(slots.running_var).to_owned())
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = (x - &mean) * &inv_std;
    let y = &xhat + &weights.vec(slots.shift);
    (
        y,
        NormCache {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            train,
        },
    )
}

/// Returns `dL/dx` and writes `dL/dshift` and the batch statistics into `grad`.
fn norm_backward(dy: &Array2<f64>, cache: &NormCache, slots: NormSlots, grad: &mut GradientVector) -> Array2<f64> {
    let sum_dy = dy.sum_axis(Axis(0));
    grad.vec_mut(slots.shift).assign(&sum_dy);
    grad.vec_mut(slots.running_mean).assign(&cache.batch_mean);
    grad.vec_mut(slots.running_var).assign(&cache.batch_var);
    if !cache.train {
        return dy * &cache.inv_std;
    }
    let n = dy.nrows() as f64;
    let sum_dy_xhat = (dy * &cache.xhat).sum_axis(Axis(0));
    let mut dx = dy * n - &sum_dy;
    dx -= &(&cache.xhat * &sum_dy_xhat);
    dx *= &(&cache.inv_std / n);
    dx
}

fn check_shapes(weights: &ModelWeights, batch: &MiniBatch, cfg: &ModelConfig) -> Result<()> {
    if **weights.layout() != Layout::for_config(cfg) {
        return Err(ModelError::Layout("weights were built for a different config".into()));
    }
    if batch.n() == 0 {
        return Err(ModelError::Dimension("empty mini-batch".into()));
    }
    if batch.bow.ncols() != cfg.vocab_size {
        return Err(ModelError::Dimension(format!(
            "batch has {} columns, vocabulary has {}",
            batch.bow.ncols(),
            cfg.vocab_size
        )));
    }
    match (cfg.variant, &batch.embeds) {
        (Variant::ProdLda, None) => Ok(()),
        (Variant::ProdLda, Some(_)) => Ok(()),
        (Variant::Combined, Some(e)) if e.nrows() == batch.n() && e.ncols() == cfg.embed_dim => Ok(()),
        (Variant::Combined, Some(e)) => Err(ModelError::Dimension(format!(
            "embeddings are {}x{}, expected {}x{}",
            e.nrows(),
            e.ncols(),
            batch.n(),
            cfg.embed_dim
        ))),
        (Variant::Combined, None) => Err(ModelError::Dimension("combined variant needs document embeddings".into())),
    }
}

fn encoder_input(batch: &MiniBatch, cfg: &ModelConfig) -> Array2<f64> {
    match (cfg.variant, &batch.embeds) {
        (Variant::Combined, Some(e)) => concatenate(Axis(1), &[batch.bow.view(), e.view()]).expect("same rows"),
        _ => batch.bow.clone(),
    }
}

struct Encoded {
    activations: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    mu: Array2<f64>,
    logvar: Array2<f64>,
    mu_norm: Option<NormCache>,
    logvar_norm: Option<NormCache>,
}

fn encode(weights: &ModelWeights, input: Array2<f64>, train: bool) -> Encoded {
    let slots = &weights.layout().slots;
    let mut activations = vec![input];
    let mut pre = Vec::with_capacity(slots.encoder.len());
    for &(w, b) in &slots.encoder {
        let a = affine(activations.last().unwrap(), weights.mat(w), weights.vec(b));
        activations.push(a.mapv(softplus));
        pre.push(a);
    }
    let h = activations.last().unwrap();
    let mu_pre = affine(h, weights.mat(slots.mu.0), weights.vec(slots.mu.1));
    let lv_pre = affine(h, weights.mat(slots.logvar.0), weights.vec(slots.logvar.1));
    let (mu, mu_norm) = match slots.mu_norm {
        Some(ns) => {
            let (y, c) = norm_forward(&mu_pre, weights, ns, train);
            (y, Some(c))
        }
        None => (mu_pre, None),
    };
    let (logvar, logvar_norm) = match slots.logvar_norm {
        Some(ns) => {
            let (y, c) = norm_forward(&lv_pre, weights, ns, train);
            (y, Some(c))
        }
        None => (lv_pre, None),
    };
    Encoded {
        activations,
        pre,
        mu,
        logvar,
        mu_norm,
        logvar_norm,
    }
}

fn prior(weights: &ModelWeights, cfg: &ModelConfig) -> (Array1<f64>, Array1<f64>) {
    match weights.layout().slots.prior {
        Some((mean, logvar)) => (weights.vec(mean).to_owned(), weights.vec(logvar).mapv(f64::exp)),
        None => {
            let (m, v) = cfg.prior_moments();
            (Array1::from(m), Array1::from(v))
        }
    }
}

fn diagnose(weights: &ModelWeights, stages: &[(&str, &Array2<f64>)]) -> ModelError {
    if let Some(block) = weights.first_non_finite_block() {
        return ModelError::NonFinite { block: block.to_string() };
    }
    let block = stages
        .iter()
        .find(|(_, a)| a.iter().any(|x| !x.is_finite()))
        .map(|(name, _)| *name)
        .unwrap_or("decoder.beta");
    ModelError::NonFinite { block: block.to_string() }
}

/// Negative ELBO averaged over the batch.
pub fn forward(weights: &ModelWeights, batch: &MiniBatch, cfg: &ModelConfig, mode: Mode<'_>) -> Result<(f64, Cache)> {
    check_shapes(weights, batch, cfg)?;
    let n = batch.n();
    let k = cfg.topics;
    let slots = &weights.layout().slots;
    let (train, eps, keep) = match mode {
        Mode::Train(noise) => {
            if noise.eps.dim() != (n, k) || noise.keep.dim() != (n, k) {
                return Err(ModelError::Dimension(format!("noise must be {n}x{k}")));
            }
            (true, noise.eps.clone(), noise.keep.clone())
        }
        Mode::Eval => (false, Array2::zeros((n, k)), Array2::ones((n, k))),
    };

    let enc = encode(weights, encoder_input(batch, cfg), train);
    let z = if train {
        &enc.mu + &(enc.logvar.mapv(|lv| (0.5 * lv).exp()) * &eps)
    } else {
        enc.mu.clone()
    };
    let theta = softmax_rows(&(&z * &keep));
    let logits = theta.dot(&weights.mat(slots.beta));
    let (scores, beta_norm) = match slots.beta_norm {
        Some(ns) => {
            let (y, c) = norm_forward(&logits, weights, ns, train);
            (y, Some(c))
        }
        None => (logits.clone(), None),
    };

    let counts = batch.bow.clone();
    let doc_len = counts.sum_axis(Axis(1));
    let mut probs = scores.clone();
    let mut recon = Array1::zeros(n);
    for ((mut row, x), r) in probs.rows_mut().into_iter().zip(counts.rows()).zip(recon.iter_mut()) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
        *r = -row.dot(&x);
        row.mapv_inplace(f64::exp);
    }

    let (prior_mean, prior_var) = prior(weights, cfg);
    let log_prior_var = prior_var.mapv(f64::ln);
    let mut kl = Array1::zeros(n);
    for ((mu, lv), out) in enc.mu.rows().into_iter().zip(enc.logvar.rows()).zip(kl.iter_mut()) {
        let mut acc = 0.0;
        for j in 0..k {
            let d = mu[j] - prior_mean[j];
            acc += lv[j].exp() / prior_var[j] + d * d / prior_var[j] - 1.0 + log_prior_var[j] - lv[j];
        }
        *out = 0.5 * acc;
    }
    let loss = (recon.sum() + kl.sum()) / n as f64;

    if !loss.is_finite() {
        let mut stages: Vec<(&str, &Array2<f64>)> = Vec::new();
        let names: Vec<String> = (0..enc.pre.len()).map(|i| format!("enc.{i}.weight")).collect();
        for (name, a) in names.iter().zip(&enc.activations[1..]) {
            stages.push((name, a));
        }
        stages.push(("mu.weight", &enc.mu));
        stages.push(("logvar.weight", &enc.logvar));
        let var = enc.logvar.mapv(f64::exp);
        stages.push(("logvar.weight", &var));
        stages.push(("decoder.beta", &logits));
        return Err(diagnose(weights, &stages));
    }

    let cache = Cache {
        layout: weights.layout().clone(),
        weights: weights.data().to_vec(),
        train,
        counts,
        doc_len,
        activations: enc.activations,
        pre: enc.pre,
        mu_norm: enc.mu_norm,
        logvar_norm: enc.logvar_norm,
        beta_norm,
        mu: enc.mu,
        logvar: enc.logvar,
        eps,
        keep,
        theta,
        probs,
        prior_mean,
        prior_var,
        recon,
        kl,
        loss,
    };
    Ok((loss, cache))
}

/// Samples the training noise from `rng` when `train_mode` is set.
pub fn forward_sampled(
    weights: &ModelWeights,
    batch: &MiniBatch,
    cfg: &ModelConfig,
    rng: &mut Rng,
    train_mode: bool,
) -> Result<(f64, Cache)> {
    if train_mode {
        let noise = Noise::sample(batch.n(), cfg, rng);
        forward(weights, batch, cfg, Mode::Train(&noise))
    } else {
        forward(weights, batch, cfg, Mode::Eval)
    }
}

/// Exact gradient of the mean loss for the pass recorded in `cache`.
///
/// Entries of running-statistic blocks hold the batch mean and (biased)
/// variance instead of a derivative; for an eval-mode cache they hold the
/// running statistics themselves, so an update leaves them in place.
pub fn backward(cache: &Cache) -> GradientVector {
    let layout = cache.layout.clone();
    let slots = layout.slots.clone();
    let weights = ModelWeights::from_vec(layout.clone(), cache.weights.clone()).expect("cache holds matching weights");
    let n = cache.n();
    let inv_n = 1.0 / n as f64;
    let mut grad = GradientVector::zeros(layout, n);

    // Reconstruction: d/du (-sum x log softmax(u)) = N p - x.
    let mut d_scores = &cache.probs * &cache.doc_len.view().insert_axis(Axis(1));
    d_scores -= &cache.counts;
    d_scores *= inv_n;

    let d_logits = match (slots.beta_norm, &cache.beta_norm) {
        (Some(ns), Some(nc)) => norm_backward(&d_scores, nc, ns, &mut grad),
        _ => d_scores,
    };
    grad.mat_mut(slots.beta).assign(&cache.theta.t().dot(&d_logits));
    let d_theta = d_logits.dot(&weights.mat(slots.beta).t());

    // Softmax Jacobian, then the dropout mask.
    let mut d_z = &d_theta * &cache.theta;
    let inner = d_z.sum_axis(Axis(1));
    Zip::from(d_z.rows_mut())
        .and(cache.theta.rows())
        .and(&inner)
        .for_each(|mut row, th, &s| row.zip_mut_with(&th, |g, &t| *g -= t * s));
    d_z *= &cache.keep;

    let prior_var = &cache.prior_var;
    let centered = &cache.mu - &cache.prior_mean;
    let mut d_mu = d_z.clone();
    d_mu.scaled_add(inv_n, &(&centered / prior_var));
    let var = cache.logvar.mapv(f64::exp);
    let mut d_lv = if cache.train {
        let sd = cache.logvar.mapv(|lv| (0.5 * lv).exp());
        &d_z * &cache.eps * &sd * 0.5
    } else {
        Array2::zeros(cache.logvar.raw_dim())
    };
    d_lv.scaled_add(0.5 * inv_n, &(&var / prior_var - 1.0));

    if let Some((mean_slot, logvar_slot)) = slots.prior {
        let d_mean = -(&centered / prior_var).sum_axis(Axis(0)) * inv_n;
        let ratio = (&var + &centered.mapv(|c| c * c)) / prior_var;
        let d_logvar = (1.0 - ratio).sum_axis(Axis(0)) * (0.5 * inv_n);
        grad.vec_mut(mean_slot).assign(&d_mean);
        grad.vec_mut(logvar_slot).assign(&d_logvar);
    }

    let d_mu_pre = match (slots.mu_norm, &cache.mu_norm) {
        (Some(ns), Some(nc)) => norm_backward(&d_mu, nc, ns, &mut grad),
        _ => d_mu,
    };
    let d_lv_pre = match (slots.logvar_norm, &cache.logvar_norm) {
        (Some(ns), Some(nc)) => norm_backward(&d_lv, nc, ns, &mut grad),
        _ => d_lv,
    };

    let h = cache.activations.last().unwrap();
    grad.mat_mut(slots.mu.0).assign(&h.t().dot(&d_mu_pre));
    grad.vec_mut(slots.mu.1).assign(&d_mu_pre.sum_axis(Axis(0)));
    grad.mat_mut(slots.logvar.0).assign(&h.t().dot(&d_lv_pre));
    grad.vec_mut(slots.logvar.1).assign(&d_lv_pre.sum_axis(Axis(0)));
    let mut d_h = d_mu_pre.dot(&weights.mat(slots.mu.0).t());
    d_h += &d_lv_pre.dot(&weights.mat(slots.logvar.0).t());

    for (layer, &(w, b)) in slots.encoder.iter().enumerate().rev() {
        let d_a = &d_h * &cache.pre[layer].mapv(sigmoid);
        let input = &cache.activations[layer];
        grad.mat_mut(w).assign(&input.t().dot(&d_a));
        grad.vec_mut(b).assign(&d_a.sum_axis(Axis(0)));
        if layer > 0 {
            d_h = d_a.dot(&weights.mat(w).t());
        }
    }
    grad
}

/// Topic proportions `softmax(mu(x))` of every document, in eval mode.
pub fn infer_theta(weights: &ModelWeights, corpus: &BowCorpus, cfg: &ModelConfig) -> Result<Array2<f64>> {
    if corpus.vocab().len() != cfg.vocab_size {
        return Err(ModelError::Dimension(format!(
            "corpus vocabulary has {} terms, model expects {}",
            corpus.vocab().len(),
            cfg.vocab_size
        )));
    }
    let mut out = Array2::zeros((corpus.len(), cfg.topics));
    const CHUNK: usize = 256;
    let indices: Vec<usize> = (0..corpus.len()).collect();
    for (c, chunk) in indices.chunks(CHUNK).enumerate() {
        let batch = MiniBatch::from_corpus(corpus, chunk);
        check_shapes(weights, &batch, cfg)?;
        let enc = encode(weights, encoder_input(&batch, cfg), false);
        let theta = softmax_rows(&enc.mu);
        out.slice_mut(s![c * CHUNK..c * CHUNK + chunk.len(), ..]).assign(&theta);
    }
    Ok(out)
}

/// Topic-word distributions: row `k` is the softmax of decoder row `k`.
pub fn get_beta(weights: &ModelWeights) -> Array2<f64> {
    softmax_rows(&weights.mat(weights.layout().slots.beta).to_owned())
}
