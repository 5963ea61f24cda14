//! Model checkpoint file.
//!
//! ```text
//! magic "FTCK" | version u32 | model config | layout | data | vocabulary
//! ```
//!
//! The layout is `u32` block count, then per block `name str, kind u8,
//! rows u64, cols u64, offset u64`; data is a `u64` count plus raw f64
//! values. Encodings follow [`crate::wire`]. The config encoding is the one
//! the wire protocol uses in `GlobalInit`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{BlockKind, Layout, ModelConfig, ModelError, ModelWeights, Result, Variant};
use crate::corpus::Vocabulary;
use crate::wire::{ByteReader, ByteWriter, DecodeError};

const MAGIC: &[u8; 4] = b"FTCK";
const VERSION: u32 = 1;

pub fn write_config(w: &mut ByteWriter, cfg: &ModelConfig) {
    w.u32(cfg.topics as u32);
    w.u32(cfg.vocab_size as u32);
    w.u8(match cfg.variant {
        Variant::ProdLda => 0,
        Variant::Combined => 1,
    });
    w.u32(cfg.embed_dim as u32);
    w.u32(cfg.hidden_sizes.len() as u32);
    for &h in &cfg.hidden_sizes {
        w.u32(h as u32);
    }
    w.f64(cfg.dropout);
    w.f64(cfg.prior_alpha);
    w.u8(cfg.learn_priors as u8);
    w.u8(cfg.batch_norm as u8);
    w.u64(cfg.seed);
}

pub fn read_config(r: &mut ByteReader<'_>) -> Result<ModelConfig, DecodeError> {
    let topics = r.u32()? as usize;
    let vocab_size = r.u32()? as usize;
    let variant = match r.u8()? {
        0 => Variant::ProdLda,
        1 => Variant::Combined,
        b => return Err(DecodeError::Invalid(format!("unknown model variant {b}"))),
    };
    let embed_dim = r.u32()? as usize;
    let layers = r.u32()? as usize;
    if layers > r.remaining() / 4 {
        return Err(DecodeError::Truncated {
            offset: r.position(),
            needed: layers * 4 - r.remaining(),
        });
    }
    let hidden_sizes = (0..layers).map(|_| r.u32().map(|h| h as usize)).collect::<Result<_, _>>()?;
    Ok(ModelConfig {
        topics,
        vocab_size,
        variant,
        embed_dim,
        hidden_sizes,
        dropout: r.f64()?,
        prior_alpha: r.f64()?,
        learn_priors: r.bool()?,
        batch_norm: r.bool()?,
        seed: r.u64()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub weights: ModelWeights,
    pub vocab: Vocabulary,
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &ModelConfig, weights: &ModelWeights, vocab: &Vocabulary) -> Result<()> {
    if **weights.layout() != Layout::for_config(config) {
        return Err(ModelError::Layout("weights do not belong to this config".into()));
    }
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    write_config(&mut w, config);
    let blocks = weights.layout().blocks();
    w.u32(blocks.len() as u32);
    for b in blocks {
        w.str(&b.name);
        w.u8(match b.kind {
            BlockKind::Param => 0,
            BlockKind::RunningStat => 1,
        });
        w.u64(b.rows as u64);
        w.u64(b.cols as u64);
        w.u64(b.offset as u64);
    }
    w.f64_array(weights.data());
    w.vocabulary(vocab);
    fs::write(path, w.into_inner())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let bad = |e: DecodeError| ModelError::Checkpoint(e.to_string());
    let mut r = ByteReader::new(&bytes);
    if r.take(4).map_err(bad)? != MAGIC {
        return Err(ModelError::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32().map_err(bad)?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let config = read_config(&mut r).map_err(bad)?;
    config.validate()?;
    let layout = Layout::for_config(&config);
    let count = r.u32().map_err(bad)? as usize;
    if count != layout.blocks().len() {
        return Err(ModelError::Checkpoint(format!(
            "{count} blocks stored, config implies {}",
            layout.blocks().len()
        )));
    }
    for expected in layout.blocks() {
        let name = r.str().map_err(bad)?;
        let kind = r.u8().map_err(bad)?;
        let rows = r.u64().map_err(bad)? as usize;
        let cols = r.u64().map_err(bad)? as usize;
        let offset = r.u64().map_err(bad)? as usize;
        let kind_ok = matches!((kind, expected.kind), (0, BlockKind::Param) | (1, BlockKind::RunningStat));
        if name != expected.name || !kind_ok || rows != expected.rows || cols != expected.cols || offset != expected.offset {
            return Err(ModelError::Checkpoint(format!("layout block {name:?} does not match the config")));
        }
    }
    let data = r.f64_array().map_err(bad)?;
    let weights = ModelWeights::from_vec(Arc::new(layout), data)?;
    let vocab = r.vocabulary().map_err(bad)?;
    r.finish().map_err(bad)?;
    if vocab.len() != config.vocab_size {
        return Err(ModelError::Checkpoint(format!(
            "vocabulary has {} terms, config says {}",
            vocab.len(),
            config.vocab_size
        )));
    }
    Ok(Checkpoint { config, weights, vocab })
}
