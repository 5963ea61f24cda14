use ndarray::{concatenate, Array2, Axis};

use super::{CorpusError, Result, Vocabulary};

/// Sparse term-count vector of one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowDocument {
    doc_id: String,
    entries: Vec<(u32, u32)>,
}

impl BowDocument {
    /// `entries` are `(position, count)` pairs; they are sorted here but must
    /// not repeat a position and every count must be positive.
    pub fn new(doc_id: impl Into<String>, mut entries: Vec<(u32, u32)>) -> Result<Self> {
        let doc_id = doc_id.into();
        entries.sort_unstable_by_key(|&(p, _)| p);
        let invalid = |reason: &str| CorpusError::InvalidDocument {
            doc_id: doc_id.clone(),
            reason: reason.to_string(),
        };
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("repeated term position"));
        }
        if entries.iter().any(|&(_, c)| c == 0) {
            return Err(invalid("zero count"));
        }
        Ok(Self { doc_id, entries })
    }

    /// Counts the positions in `tokens`.
    pub fn from_positions(doc_id: impl Into<String>, tokens: impl IntoIterator<Item = u32>) -> Self {
        let mut positions: Vec<u32> = tokens.into_iter().collect();
        positions.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for p in positions {
            match entries.last_mut() {
                Some((last, c)) if *last == p => *c += 1,
                _ => entries.push((p, 1)),
            }
        }
        Self {
            doc_id: doc_id.into(),
            entries,
        }
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn total_tokens(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn count(&self, pos: u32) -> u32 {
        self.entries
            .binary_search_by_key(&pos, |&(p, _)| p)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }
}

/// Documents over a shared vocabulary, with optional per-document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct BowCorpus {
    vocab: Vocabulary,
    docs: Vec<BowDocument>,
    embeddings: Option<Array2<f64>>,
}

impl BowCorpus {
    pub fn new(vocab: Vocabulary, docs: Vec<BowDocument>, embeddings: Option<Array2<f64>>) -> Result<Self> {
        let v = vocab.len();
        for doc in &docs {
            if let Some(&(p, _)) = doc.entries.last() {
                if p as usize >= v {
                    return Err(CorpusError::InvalidDocument {
                        doc_id: doc.doc_id.clone(),
                        reason: format!("position {p} outside vocabulary of size {v}"),
                    });
                }
            }
        }
        if let Some(e) = &embeddings {
            if e.nrows() != docs.len() {
                return Err(CorpusError::EmbeddingRows {
                    rows: e.nrows(),
                    docs: docs.len(),
                });
            }
            if e.ncols() == 0 {
                return Err(CorpusError::EmptyEmbedding);
            }
        }
        Ok(Self { vocab, docs, embeddings })
    }

    /// Maps raw tokens through `vocab`; tokens outside it are dropped.
    /// Documents are named by their position.
    pub fn from_tokens<D, T>(vocab: Vocabulary, tokenized_docs: &[D]) -> Self
    where
        D: AsRef<[T]>,
        T: AsRef<str>,
    {
        let docs = tokenized_docs
            .iter()
            .enumerate()
            .map(|(i, doc)| {
                let positions = doc
                    .as_ref()
                    .iter()
                    .filter_map(|t| vocab.position(t.as_ref()).map(|p| p as u32));
                BowDocument::from_positions(i.to_string(), positions)
            })
            .collect();
        Self {
            vocab,
            docs,
            embeddings: None,
        }
    }

    pub fn with_embeddings(self, embeddings: Array2<f64>) -> Result<Self> {
        Self::new(self.vocab, self.docs, Some(embeddings))
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn docs(&self) -> &[BowDocument] {
        &self.docs
    }

    pub fn embeddings(&self) -> Option<&Array2<f64>> {
        self.embeddings.as_ref()
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.embeddings.as_ref().map(|e| e.ncols())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Documents at `indices`, in that order, with matching embedding rows.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            vocab: self.vocab.clone(),
            docs: indices.iter().map(|&i| self.docs[i].clone()).collect(),
            embeddings: self.embeddings.as_ref().map(|e| e.select(Axis(0), indices)),
        }
    }

    /// Concatenates corpora that already share one vocabulary.
    pub fn concat(parts: &[BowCorpus]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(CorpusError::NothingToMerge);
        };
        if let Some(p) = parts.iter().find(|p| p.vocab != first.vocab) {
            let missing = p
                .vocab
                .terms()
                .iter()
                .find(|t| first.vocab.position(t).is_none())
                .or_else(|| first.vocab.terms().iter().find(|t| p.vocab.position(t).is_none()))
                .cloned()
                .unwrap_or_else(|| "<frequency mismatch>".to_string());
            return Err(CorpusError::MissingTerm(missing));
        }
        let docs = parts.iter().flat_map(|p| p.docs.iter().cloned()).collect();
        let embeddings = if parts.iter().all(|p| p.embeddings.is_some()) {
            let views: Vec<_> = parts.iter().map(|p| p.embeddings.as_ref().unwrap().view()).collect();
            Some(concatenate(Axis(0), &views).map_err(|_| CorpusError::EmptyEmbedding)?)
        } else {
            None
        };
        Self::new(first.vocab.clone(), docs, embeddings)
    }

    /// Dense `[n x V]` count matrix of the documents at `indices`.
    pub fn dense_counts(&self, indices: &[usize]) -> Array2<f64> {
        let mut out = Array2::zeros((indices.len(), self.vocab.len()));
        for (row, &i) in indices.iter().enumerate() {
            for &(p, c) in &self.docs[i].entries {
                out[[row, p as usize]] = c as f64;
            }
        }
        out
    }
}

/// Re-expresses `corpus` over `target`, which must contain every source term.
pub fn remap_corpus(corpus: &BowCorpus, target: &Vocabulary) -> Result<BowCorpus> {
    let mapping = corpus
        .vocab
        .terms()
        .iter()
        .map(|t| target.position(t).map(|p| p as u32).ok_or_else(|| CorpusError::MissingTerm(t.clone())))
        .collect::<Result<Vec<u32>>>()?;
    let docs = corpus
        .docs
        .iter()
        .map(|d| {
            let mut entries: Vec<(u32, u32)> = d.entries.iter().map(|&(p, c)| (mapping[p as usize], c)).collect();
            entries.sort_unstable_by_key(|&(p, _)| p);
            BowDocument {
                doc_id: d.doc_id.clone(),
                entries,
            }
        })
        .collect();
    Ok(BowCorpus {
        vocab: target.clone(),
        docs,
        embeddings: corpus.embeddings.clone(),
    })
}

/// Re-expresses `corpus` over `target`, dropping occurrences of terms that
/// `target` does not contain. Documents may end up empty.
pub fn project_corpus(corpus: &BowCorpus, target: &Vocabulary) -> BowCorpus {
    let mapping: Vec<Option<u32>> = corpus.vocab.terms().iter().map(|t| target.position(t).map(|p| p as u32)).collect();
    let docs = corpus
        .docs
        .iter()
        .map(|d| {
            let mut entries: Vec<(u32, u32)> =
                d.entries.iter().filter_map(|&(p, c)| mapping[p as usize].map(|q| (q, c))).collect();
            entries.sort_unstable_by_key(|&(p, _)| p);
            BowDocument {
                doc_id: d.doc_id.clone(),
                entries,
            }
        })
        .collect();
    BowCorpus {
        vocab: target.clone(),
        docs,
        embeddings: corpus.embeddings.clone(),
    }
}
