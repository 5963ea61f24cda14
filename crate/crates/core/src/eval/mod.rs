//! Scores for topic models: document and topic similarity against a known
//! generative model, and word mover's distance between topic descriptions.

mod csv_out;
mod similarity;
mod topics;
mod wmd;

pub use csv_out::{append_scores, read_scores, ScoreRow, CSV_HEADER};
pub use similarity::{dss, hellinger_similarity, similarity_matrix, tss, tss_baseline};
pub use topics::{topic_description, topic_descriptions, EmbeddingTable, TopicDescription, Weighting, DEFAULT_TOP_N};
pub use wmd::{amwmd, transport_cost, wmd, Amwmd};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("not a probability distribution: {0}")]
    NotDistribution(String),
    #[error("no embedding for term {0:?}")]
    MissingEmbedding(String),
    #[error("invalid topic description: {0}")]
    InvalidDescription(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
