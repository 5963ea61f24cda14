//! Flat parameter storage.
//!
//! All weights live in one `Vec<f64>`; a [`Layout`] names each block and
//! records its shape and offset. Gradients share the layout, so aggregation
//! and the update rule are plain element-wise loops.

use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng as _;

use super::{ModelConfig, ModelError, Result};
use crate::rng::{self, streams};

/// Momentum of the running batch-normalization statistics.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Trained by gradient descent.
    Param,
    /// Batch-normalization running statistic. The matching gradient entries
    /// carry the mini-batch statistic and the update is an exponential
    /// moving average with [`BN_MOMENTUM`].
    RunningStat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
    pub kind: BlockKind,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NormSlots {
    pub shift: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

/// Block indices by role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Slots {
    pub encoder: Vec<(usize, usize)>,
    pub mu: (usize, usize),
    pub logvar: (usize, usize),
    pub beta: usize,
    pub mu_norm: Option<NormSlots>,
    pub logvar_norm: Option<NormSlots>,
    pub beta_norm: Option<NormSlots>,
    pub prior: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    total: usize,
    pub(crate) slots: Slots,
}

struct Builder {
    blocks: Vec<Block>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, rows: usize, cols: usize, kind: BlockKind) -> usize {
        self.blocks.push(Block {
            name,
            rows,
            cols,
            offset: self.total,
            kind,
        });
        self.total += rows * cols;
        self.blocks.len() - 1
    }

    fn norm(&mut self, prefix: &str, width: usize) -> NormSlots {
        NormSlots {
            shift: self.push(format!("{prefix}.shift"), 1, width, BlockKind::Param),
            running_mean: self.push(format!("{prefix}.running_mean"), 1, width, BlockKind::RunningStat),
            running_var: self.push(format!("{prefix}.running_var"), 1, width, BlockKind::RunningStat),
        }
    }
}

impl Layout {
    /// Depends only on the shapes in `cfg`, never on its seed.
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let mut b = Builder {
            blocks: Vec::new(),
            total: 0,
        };
        let k = cfg.topics;
        let mut fan_in = cfg.input_dim();
        let mut encoder = Vec::new();
        for (i, &h) in cfg.hidden_sizes.iter().enumerate() {
            let w = b.push(format!("enc.{i}.weight"), fan_in, h, BlockKind::Param);
            let bias = b.push(format!("enc.{i}.bias"), 1, h, BlockKind::Param);
            encoder.push((w, bias));
            fan_in = h;
        }
        let mu = (
            b.push("mu.weight".into(), fan_in, k, BlockKind::Param),
            b.push("mu.bias".into(), 1, k, BlockKind::Param),
        );
        let logvar = (
            b.push("logvar.weight".into(), fan_in, k, BlockKind::Param),
            b.push("logvar.bias".into(), 1, k, BlockKind::Param),
        );
        let beta = b.push("decoder.beta".into(), k, cfg.vocab_size, BlockKind::Param);
        let (mu_norm, logvar_norm, beta_norm) = if cfg.batch_norm {
            (Some(b.norm("mu_bn", k)), Some(b.norm("logvar_bn", k)), Some(b.norm("beta_bn", cfg.vocab_size)))
        } else {
            (None, None, None)
        };
        let prior = cfg.learn_priors.then(|| {
            (
                b.push("prior.mean".into(), 1, k, BlockKind::Param),
                b.push("prior.logvar".into(), 1, k, BlockKind::Param),
            )
        });
        Layout {
            blocks: b.blocks,
            total: b.total,
            slots: Slots {
                encoder,
                mu,
                logvar,
                beta,
                mu_norm,
                logvar_norm,
                beta_norm,
                prior,
            },
        }
    }

    /// A single trainable block, for exercising update arithmetic.
    #[cfg(test)]
    pub(crate) fn flat(len: usize) -> Self {
        Layout {
            blocks: vec![Block {
                name: "flat".into(),
                rows: 1,
                cols: len,
                offset: 0,
                kind: BlockKind::Param,
            }],
            total: len,
            slots: Slots {
                encoder: Vec::new(),
                mu: (0, 0),
                logvar: (0, 0),
                beta: 0,
                mu_norm: None,
                logvar_norm: None,
                beta_norm: None,
                prior: None,
            },
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Name of the block holding flat coordinate `i`.
    pub fn block_at(&self, i: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range().contains(&i))
    }

    pub fn has_running_stats(&self) -> bool {
        self.blocks.iter().any(|b| b.kind == BlockKind::RunningStat)
    }
}

fn view2<'a>(layout: &Layout, data: &'a [f64], slot: usize) -> ArrayView2<'a, f64> {
    let b = &layout.blocks[slot];
    ArrayView2::from_shape((b.rows, b.cols), &data[b.range()]).expect("block shape")
}

fn view1<'a>(layout: &Layout, data: &'a [f64], slot: usize) -> ArrayView1<'a, f64> {
    let b = &layout.blocks[slot];
    ArrayView1::from(&data[b.range()])
}

/// Global model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl ModelWeights {
    pub fn from_vec(layout: Arc<Layout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(ModelError::Layout(format!(
                "{} values for a layout of {}",
                data.len(),
                layout.total()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let data = vec![0.0; layout.total()];
        Self { layout, data }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.data[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.block(name)?.range();
        Some(&mut self.data[range])
    }

    pub(crate) fn mat(&self, slot: usize) -> ArrayView2<'_, f64> {
        view2(&self.layout, &self.data, slot)
    }

    pub(crate) fn vec(&self, slot: usize) -> ArrayView1<'_, f64> {
        view1(&self.layout, &self.data, slot)
    }

    /// First block containing a NaN or infinity.
    pub fn first_non_finite_block(&self) -> Option<&str> {
        self.layout
            .blocks
            .iter()
            .find(|b| self.data[b.range()].iter().any(|x| !x.is_finite()))
            .map(|b| b.name.as_str())
    }
}

/// Mean-over-batch gradient of one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    layout: Arc<Layout>,
    data: Vec<f64>,
    n_samples: usize,
}

impl GradientVector {
    pub fn from_vec(layout: Arc<Layout>, data: Vec<f64>, n_samples: usize) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(ModelError::Layout(format!(
                "{} gradient values for a layout of {}",
                data.len(),
                layout.total()
            )));
        }
        if n_samples == 0 {
            return Err(ModelError::Layout("gradient over zero samples".into()));
        }
        Ok(Self {
            layout,
            data,
            n_samples,
        })
    }

    pub(crate) fn zeros(layout: Arc<Layout>, n_samples: usize) -> Self {
        let data = vec![0.0; layout.total()];
        Self {
            layout,
            data,
            n_samples,
        }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.data[b.range()])
    }

    pub(crate) fn mat_mut(&mut self, slot: usize) -> ArrayViewMut2<'_, f64> {
        let b = &self.layout.blocks[slot];
        ArrayViewMut2::from_shape((b.rows, b.cols), &mut self.data[b.range()]).expect("block shape")
    }

    pub(crate) fn vec_mut(&mut self, slot: usize) -> ArrayViewMut1<'_, f64> {
        let range = self.layout.blocks[slot].range();
        ArrayViewMut1::from(&mut self.data[range])
    }
}

/// Seeded initialization.
///
/// Every encoder, head and decoder weight and bias is drawn from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, blocks in layout order from one
/// generator. The decoder's fan-in is `K`. Normalization shifts and running
/// means start at 0, running variances at 1, learned priors at the Laplace
/// moments.
pub fn init_weights(cfg: &ModelConfig) -> Result<ModelWeights> {
    cfg.validate()?;
    let layout = Arc::new(Layout::for_config(cfg));
    let mut data = vec![0.0; layout.total()];
    let mut rng = rng::stream(cfg.seed, streams::WEIGHT_INIT);
    let s = &layout.slots;
    let mut linear = vec![];
    for &(w, b) in &s.encoder {
        linear.push((w, layout.blocks[w].rows));
        linear.push((b, layout.blocks[w].rows));
    }
    for (w, b) in [s.mu, s.logvar] {
        linear.push((w, layout.blocks[w].rows));
        linear.push((b, layout.blocks[w].rows));
    }
    linear.push((s.beta, cfg.topics));
    for (slot, fan_in) in linear {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for x in &mut data[layout.blocks[slot].range()] {
            *x = rng.random_range(-bound..bound);
        }
    }
    for norm in [s.mu_norm, s.logvar_norm, s.beta_norm].into_iter().flatten() {
        data[layout.blocks[norm.running_var].range()].fill(1.0);
    }
    if let Some((mean, logvar)) = s.prior {
        let (m0, v0) = cfg.prior_moments();
        data[layout.blocks[mean].range()].copy_from_slice(&m0);
        for (x, v) in data[layout.blocks[logvar].range()].iter_mut().zip(v0) {
            *x = v.ln();
        }
    }
    ModelWeights::from_vec(layout, data)
}
