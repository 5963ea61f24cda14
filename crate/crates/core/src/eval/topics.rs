use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::ArrayView2;
use rand_distr::{Distribution, StandardNormal};

use super::{EvalError, Result};
use crate::corpus::Vocabulary;
use crate::rng::Rng;

pub const DEFAULT_TOP_N: usize = 15;

/// How the kept top words are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Topic-word probabilities rescaled to sum to one.
    #[default]
    Renormalized,
    /// Equal weight per kept word.
    Uniform,
}

/// A topic summarized by its most probable words.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDescription {
    topic_id: usize,
    words: Vec<(String, f64)>,
}

impl TopicDescription {
    pub fn new(topic_id: usize, words: Vec<(String, f64)>) -> Result<Self> {
        if words.is_empty() {
            return Err(EvalError::InvalidDescription("no words".into()));
        }
        let mut seen = HashSet::new();
        for (t, w) in &words {
            if !seen.insert(t.as_str()) {
                return Err(EvalError::InvalidDescription(format!("term {t:?} appears twice")));
            }
            if !(*w >= 0.0 && w.is_finite()) {
                return Err(EvalError::InvalidDescription(format!("term {t:?} has weight {w}")));
            }
        }
        let total: f64 = words.iter().map(|w| w.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EvalError::InvalidDescription(format!("weights sum to {total}")));
        }
        Ok(Self { topic_id, words })
    }

    pub fn topic_id(&self) -> usize {
        self.topic_id
    }

    pub fn words(&self) -> &[(String, f64)] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// The `n_top` heaviest terms of one topic row. Ties go to the term that
/// comes first in the vocabulary; zero-weight terms are never kept.
pub fn topic_description(
    topic_id: usize,
    beta_row: &[f64],
    vocab: &Vocabulary,
    n_top: usize,
    weighting: Weighting,
) -> Result<TopicDescription> {
    if beta_row.len() != vocab.len() {
        return Err(EvalError::Dimension(format!("topic over {} terms, vocabulary of {}", beta_row.len(), vocab.len())));
    }
    if n_top == 0 {
        return Err(EvalError::Invalid("n_top must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..beta_row.len()).filter(|&v| beta_row[v] > 0.0).collect();
    order.sort_by(|&a, &b| beta_row[b].total_cmp(&beta_row[a]).then(a.cmp(&b)));
    order.truncate(n_top);
    if order.is_empty() {
        return Err(EvalError::InvalidDescription(format!("topic {topic_id} has no positive weight")));
    }
    let mass: f64 = order.iter().map(|&v| beta_row[v]).sum();
    let uniform = 1.0 / order.len() as f64;
    let words = order
        .iter()
        .map(|&v| {
            let w = match weighting {
                Weighting::Renormalized => beta_row[v] / mass,
                Weighting::Uniform => uniform,
            };
            (vocab.terms()[v].clone(), w)
        })
        .collect();
    TopicDescription::new(topic_id, words)
}

/// Descriptions of every row of `beta`.
pub fn topic_descriptions(
    beta: ArrayView2<'_, f64>,
    vocab: &Vocabulary,
    n_top: usize,
    weighting: Weighting,
) -> Result<Vec<TopicDescription>> {
    beta.rows()
        .into_iter()
        .enumerate()
        .map(|(k, row)| topic_description(k, &row.to_vec(), vocab, n_top, weighting))
        .collect()
}

/// Word vectors keyed by term.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EvalError::Invalid("embedding dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, term: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let term = term.into();
        if vector.len() != self.dim {
            return Err(EvalError::Dimension(format!(
                "vector for {term:?} has {} entries, table dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        self.vectors.insert(term, vector);
        Ok(())
    }

    /// Independent standard normal vectors for `terms`.
    pub fn random<'a>(terms: impl IntoIterator<Item = &'a str>, dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut table = Self::new(dim)?;
        for t in terms {
            let v = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            table.insert(t, v)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, term: &str) -> Result<&[f64]> {
        self.vectors
            .get(term)
            .map(Vec::as_slice)
            .ok_or_else(|| EvalError::MissingEmbedding(term.to_string()))
    }

    /// Reads `E <dim>` followed by lines of `term v1 .. vE`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let err = |line: usize, reason: String| EvalError::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty embedding file".into()))?;
        let dim = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["E", d] => d.parse::<usize>().map_err(|e| err(1, format!("bad dimension: {e}")))?,
            _ => return Err(err(1, "expected header `E <dim>`".into())),
        };
        let mut table = Self::new(dim).map_err(|e| err(1, e.to_string()))?;
        for (i, line) in lines {
            let mut parts = line.split_whitespace();
            let term = parts.next().expect("non-empty line");
            let v = parts
                .map(|x| x.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(i + 1, format!("bad number: {e}")))?;
            if table.vectors.contains_key(term) {
                return Err(err(i + 1, format!("duplicate term {term:?}")));
            }
            table.insert(term, v).map_err(|e| err(i + 1, e.to_string()))?;
        }
        Ok(table)
    }

    /// Writes terms in sorted order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        writeln!(w, "E {}", self.dim)?;
        let mut terms: Vec<&String> = self.vectors.keys().collect();
        terms.sort();
        for t in terms {
            write!(w, "{t}")?;
            for x in &self.vectors[t] {
                write!(w, " {x:?}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}
