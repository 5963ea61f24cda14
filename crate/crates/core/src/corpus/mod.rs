//! Vocabularies and bag-of-words corpora.
//!
//! A [`Vocabulary`] is always kept in canonical form: terms sorted in
//! byte-lexicographic order. Two parties that see the same term counts
//! therefore build bitwise-identical vocabularies, which the vocabulary
//! consensus stage relies on.

mod bow;
mod io;
mod vocab;

pub use bow::{project_corpus, remap_corpus, BowCorpus, BowDocument};
pub use io::{
    load_corpus, load_corpus_filtered, load_embeddings, load_vocabulary, save_corpus, save_embeddings, save_vocabulary,
    sidecar_path,
};
pub use vocab::{build_vocabulary, merge_vocabularies, Vocabulary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("vocabulary is empty after filtering with min_count={min_count}")]
    EmptyVocabulary { min_count: usize },
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("no vocabularies to merge")]
    NothingToMerge,
    #[error("duplicate term {0:?}")]
    DuplicateTerm(String),
    #[error("term {term:?} has invalid frequency {freq}")]
    InvalidFrequency { term: String, freq: f64 },
    #[error("document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
    #[error("term {0:?} is missing from the target vocabulary")]
    MissingTerm(String),
    #[error("embeddings have {rows} rows but the corpus has {docs} documents")]
    EmbeddingRows { rows: usize, docs: usize },
    #[error("embedding dimension must be positive")]
    EmptyEmbedding,
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;
