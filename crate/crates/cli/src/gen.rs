use std::path::{Path, PathBuf};

use fedtopic::eval::EmbeddingTable;
use fedtopic::rng::{self, streams};
use fedtopic::synthgen::{artificial_terms, generate_dataset, save_dataset};

use crate::config::{is_synth_key, Config};
use crate::data::WORD_EMBEDDINGS;
use crate::error::{CliError, Result};

/// Writes one dataset per grid point and repetition under `out`, else
/// `data.dataset`, else `output.dir`; returns their directories.
pub fn gen_synthetic(cfg: &Config, out: Option<&Path>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, point) in cfg.expand_where(is_synth_key) {
        let synth = point.synth()?;
        let runs = point.runs()?;
        let root = match out {
            Some(p) => p.to_path_buf(),
            None => match point.get_path("data.dataset")? {
                Some(p) => p,
                None => point
                    .get_path("output.dir")?
                    .ok_or_else(|| CliError::Config("set data.dataset or output.dir".into()))?,
            },
        };
        let base = if name.is_empty() { root } else { root.join(&name) };
        let word_dim: Option<usize> = point.get("synth.word_embed_dim")?;
        for r in 0..runs {
            let dir = if runs > 1 { base.join(format!("run{r}")) } else { base.clone() };
            let mut s = synth.clone();
            s.seed = synth.seed.wrapping_add(r as u64);
            let ds = generate_dataset(&s)?;
            save_dataset(&ds, &dir)?;
            if let Some(dim) = word_dim {
                let terms = artificial_terms(s.vocab_size);
                let mut rng = rng::stream(s.seed, streams::WORD_EMBEDDINGS);
                EmbeddingTable::random(terms.iter().map(String::as_str), dim, &mut rng)?.save(dir.join(WORD_EMBEDDINGS))?;
            }
            log::info!("wrote {}", dir.display());
            written.push(dir);
        }
    }
    Ok(written)
}
