//! Multi-node synthetic corpora from the LDA generative model.
//!
//! The first `shared_topics` topics are visible to every node; the remaining
//! topics are split into `nodes` contiguous private blocks. Each node's
//! documents mix only the topics it owns, so private topics of other nodes
//! carry exactly zero mass in the recorded ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::corpus::{self, BowCorpus, BowDocument, CorpusError, Vocabulary};
use crate::matrix_io::{read_matrix, write_matrix};
use crate::rng::{self, streams, Rng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub nodes: usize,
    pub topics: usize,
    pub shared_topics: usize,
    pub vocab_size: usize,
    pub docs_train: usize,
    pub docs_valid: usize,
    pub len_min: usize,
    pub len_max: usize,
    pub alpha: f64,
    pub eta: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// The full-size setting: 5 nodes, 50 topics, 5000 terms.
    fn default() -> Self {
        Self {
            nodes: 5,
            topics: 50,
            shared_topics: 10,
            vocab_size: 5000,
            docs_train: 10_000,
            docs_valid: 1_000,
            len_min: 150,
            len_max: 250,
            alpha: 50.0 / 50.0,
            eta: 0.01,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.nodes == 0 {
            return fail("nodes must be positive");
        }
        if self.topics == 0 || self.shared_topics > self.topics {
            return fail("need 0 <= shared_topics <= topics and topics > 0");
        }
        if (self.topics - self.shared_topics) % self.nodes != 0 {
            return fail("topics - shared_topics must be divisible by nodes");
        }
        if self.topics_per_node() == 0 {
            return fail("every node needs at least one topic");
        }
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive");
        }
        if self.len_min > self.len_max {
            return fail("len_min must not exceed len_max");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta must be positive");
        }
        Ok(())
    }

    pub fn private_per_node(&self) -> usize {
        (self.topics - self.shared_topics) / self.nodes
    }

    pub fn topics_per_node(&self) -> usize {
        self.shared_topics + self.private_per_node()
    }

    /// `key=value` manifest lines with the `synth.` prefix.
    pub fn to_manifest(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            writeln!(s, "synth.{k}={v}").unwrap();
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("L", self.nodes.to_string()),
            ("K", self.topics.to_string()),
            ("K_shared", self.shared_topics.to_string()),
            ("V", self.vocab_size.to_string()),
            ("docs_train", self.docs_train.to_string()),
            ("docs_valid", self.docs_valid.to_string()),
            ("len_min", self.len_min.to_string()),
            ("len_max", self.len_max.to_string()),
            ("alpha", self.alpha.to_string()),
            ("eta", self.eta.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Reads the `synth.*` keys of a manifest; unknown keys are ignored and
    /// `alpha` defaults to `50 / K`.
    pub fn from_manifest(text: &str) -> Result<Self, SynthError> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                if let Some(k) = k.trim().strip_prefix("synth.") {
                    map.insert(k.to_string(), v.trim().to_string());
                }
            }
        }
        Self::from_map(&map)
    }

    /// Builds a config from unprefixed keys (`L`, `K`, `K_shared`, ...).
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, SynthError> {
        fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, SynthError> {
            map.get(key)
                .map(|v| {
                    v.parse::<T>()
                        .map_err(|_| SynthError::Config(format!("synth.{key}: cannot parse {v:?}")))
                })
                .transpose()
        }
        fn req<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, SynthError> {
            get(map, key)?.ok_or_else(|| SynthError::Config(format!("synth.{key} is required")))
        }
        let topics: usize = req(map, "K")?;
        let cfg = Self {
            nodes: req(map, "L")?,
            topics,
            shared_topics: req(map, "K_shared")?,
            vocab_size: req(map, "V")?,
            docs_train: req(map, "docs_train")?,
            docs_valid: req(map, "docs_valid")?,
            len_min: get(map, "len_min")?.unwrap_or(150),
            len_max: get(map, "len_max")?.unwrap_or(250),
            alpha: get(map, "alpha")?.unwrap_or(50.0 / topics.max(1) as f64),
            eta: req(map, "eta")?,
            seed: get(map, "seed")?.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Ground-truth topics of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub beta: Array2<f64>,
    pub node_topics: Vec<Vec<usize>>,
    pub alpha: f64,
    pub eta: f64,
}

/// True per-document topic proportions over all `K` topics.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub thetas: Array2<f64>,
    pub node_of_doc: Vec<usize>,
}

impl GroundTruth {
    pub fn concat(parts: &[GroundTruth]) -> Self {
        let views: Vec<_> = parts.iter().map(|p| p.thetas.view()).collect();
        Self {
            thetas: concatenate(Axis(0), &views).expect("equal topic counts"),
            node_of_doc: parts.iter().flat_map(|p| p.node_of_doc.iter().copied()).collect(),
        }
    }
}

/// Symmetric Dirichlet draw.
///
/// Components are sampled in log space, `ln Gamma(a + 1) + ln(U) / a`, which
/// has the distribution of `ln Gamma(a)` but cannot underflow to zero for the
/// tiny concentrations used for sparse topics.
pub fn sample_dirichlet(concentration: f64, dim: usize, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(concentration + 1.0, 1.0).expect("positive concentration");
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
            g.ln() + u.ln() / concentration
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Inverse-CDF categorical sampler over a fixed weight vector.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn new(weights: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let total = *self.cumulative.last().expect("nonempty support");
        let u = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

pub fn sample_true_model(cfg: &SynthConfig, rng: &mut Rng) -> TrueModel {
    let (k, v) = (cfg.topics, cfg.vocab_size);
    let mut beta = Array2::zeros((k, v));
    for mut row in beta.rows_mut() {
        let draw = sample_dirichlet(cfg.eta, v, rng);
        row.iter_mut().zip(draw).for_each(|(b, d)| *b = d);
    }
    let private = cfg.private_per_node();
    let node_topics = (0..cfg.nodes)
        .map(|node| {
            let start = cfg.shared_topics + node * private;
            (0..cfg.shared_topics).chain(start..start + private).collect()
        })
        .collect();
    TrueModel {
        beta,
        node_topics,
        alpha: cfg.alpha,
        eta: cfg.eta,
    }
}

/// The shared artificial vocabulary `term000 .. term{V-1}`, zero-padded so
/// canonical order equals index order.
pub fn artificial_terms(vocab_size: usize) -> Vec<String> {
    let width = vocab_size.saturating_sub(1).to_string().len();
    (0..vocab_size).map(|i| format!("term{i:0width$}")).collect()
}

/// Draws `n_docs` documents for `node`. Document ids are `n{node}-{prefix}{i}`.
pub fn generate_node_corpus(
    model: &TrueModel,
    node: usize,
    n_docs: usize,
    cfg: &SynthConfig,
    id_prefix: &str,
    rng: &mut Rng,
) -> Result<(BowCorpus, GroundTruth), SynthError> {
    let topics = model
        .node_topics
        .get(node)
        .ok_or_else(|| SynthError::Config(format!("node {node} out of range")))?;
    let (k, v) = model.beta.dim();
    let word_samplers: Vec<Categorical> = model.beta.rows().into_iter().map(|r| Categorical::new(r.iter().copied())).collect();
    let mut thetas = Array2::zeros((n_docs, k));
    let mut freq = vec![0u64; v];
    let mut docs = Vec::with_capacity(n_docs);
    for d in 0..n_docs {
        let local = sample_dirichlet(model.alpha, topics.len(), rng);
        for (&t, &p) in topics.iter().zip(&local) {
            thetas[[d, t]] = p;
        }
        let topic_sampler = Categorical::new(local.iter().copied());
        let len = rng.random_range(cfg.len_min..=cfg.len_max);
        let tokens: Vec<u32> = (0..len)
            .map(|_| {
                let z = topics[topic_sampler.sample(rng)];
                word_samplers[z].sample(rng) as u32
            })
            .collect();
        for &w in &tokens {
            freq[w as usize] += 1;
        }
        docs.push(BowDocument::from_positions(format!("n{node}-{id_prefix}{d}"), tokens));
    }
    let vocab = Vocabulary::from_pairs(artificial_terms(v).into_iter().zip(freq.into_iter().map(|f| f as f64)))?;
    let corpus = BowCorpus::new(vocab, docs, None)?;
    Ok((
        corpus,
        GroundTruth {
            thetas,
            node_of_doc: vec![node; n_docs],
        },
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub model: TrueModel,
    pub train: Vec<BowCorpus>,
    pub valid: Vec<BowCorpus>,
    pub train_truth: GroundTruth,
    pub valid_truth: GroundTruth,
}

/// Deterministic in `cfg.seed`: the true model uses stream 0 of the seed;
/// node `l` draws its training then validation documents from seed `seed + l`.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let model = sample_true_model(cfg, &mut rng::stream(cfg.seed, streams::TRUE_MODEL));
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut train_truth = Vec::new();
    let mut valid_truth = Vec::new();
    for node in 0..cfg.nodes {
        let mut rng = rng::stream(cfg.seed.wrapping_add(node as u64), streams::NODE_CORPUS);
        let (c, t) = generate_node_corpus(&model, node, cfg.docs_train, cfg, "t", &mut rng)?;
        train.push(c);
        train_truth.push(t);
        let (c, t) = generate_node_corpus(&model, node, cfg.docs_valid, cfg, "v", &mut rng)?;
        valid.push(c);
        valid_truth.push(t);
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        model,
        train,
        valid,
        train_truth: GroundTruth::concat(&train_truth),
        valid_truth: GroundTruth::concat(&valid_truth),
    })
}

impl SynthDataset {
    /// All validation documents of every node, in node order.
    pub fn pooled_validation(&self) -> BowCorpus {
        pooled(&self.valid)
    }
}

fn pooled(parts: &[BowCorpus]) -> BowCorpus {
    let vocab = Vocabulary::from_pairs(artificial_terms(parts[0].vocab().len()).into_iter().map(|t| (t, 0.0)))
        .expect("artificial terms are unique");
    let remapped: Vec<BowCorpus> = parts
        .iter()
        .map(|p| corpus::remap_corpus(p, &vocab).expect("same artificial terms"))
        .collect();
    BowCorpus::concat(&remapped).expect("shared vocabulary")
}

pub fn node_dir(dir: &Path, node: usize) -> std::path::PathBuf {
    dir.join(format!("node{node}"))
}

/// Layout:
///
/// ```text
/// manifest.txt
/// node{l}/train.txt, node{l}/valid.txt   (+ corpus sidecars)
/// truth/beta.bin, truth/train_thetas.bin, truth/valid_thetas.bin
/// truth/node_topics.txt, truth/train_nodes.txt, truth/valid_nodes.txt
/// ```
pub fn save_dataset(ds: &SynthDataset, dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir.join("truth"))?;
    fs::write(dir.join("manifest.txt"), ds.config.to_manifest())?;
    for (node, (train, valid)) in ds.train.iter().zip(&ds.valid).enumerate() {
        let nd = node_dir(dir, node);
        fs::create_dir_all(&nd)?;
        corpus::save_corpus(train, nd.join("train.txt"))?;
        corpus::save_corpus(valid, nd.join("valid.txt"))?;
    }
    let truth = dir.join("truth");
    write_matrix(truth.join("beta.bin"), ds.model.beta.view())?;
    write_matrix(truth.join("train_thetas.bin"), ds.train_truth.thetas.view())?;
    write_matrix(truth.join("valid_thetas.bin"), ds.valid_truth.thetas.view())?;
    let lines = |v: &[usize]| v.iter().map(|n| format!("{n}\n")).collect::<String>();
    fs::write(truth.join("train_nodes.txt"), lines(&ds.train_truth.node_of_doc))?;
    fs::write(truth.join("valid_nodes.txt"), lines(&ds.valid_truth.node_of_doc))?;
    let topics: String = ds
        .model
        .node_topics
        .iter()
        .map(|t| t.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ") + "\n")
        .collect();
    fs::write(truth.join("node_topics.txt"), topics)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<SynthDataset, SynthError> {
    let config = SynthConfig::from_manifest(&fs::read_to_string(dir.join("manifest.txt"))?)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for node in 0..config.nodes {
        let nd = node_dir(dir, node);
        train.push(corpus::load_corpus(nd.join("train.txt"))?);
        valid.push(corpus::load_corpus(nd.join("valid.txt"))?);
    }
    let truth = dir.join("truth");
    let read_nodes = |name: &str| -> Result<Vec<usize>, SynthError> {
        let path = truth.join(name);
        fs::read_to_string(&path)?
            .lines()
            .map(|l| {
                l.trim().parse().map_err(|_| SynthError::Format {
                    path: path.display().to_string(),
                    reason: format!("bad node index {l:?}"),
                })
            })
            .collect()
    };
    let path = truth.join("node_topics.txt");
    let node_topics = fs::read_to_string(&path)?
        .lines()
        .map(|l| {
            l.split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| SynthError::Format {
                        path: path.display().to_string(),
                        reason: format!("bad topic index {t:?}"),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<usize>>, _>>()?;
    Ok(SynthDataset {
        model: TrueModel {
            beta: read_matrix(truth.join("beta.bin"))?,
            node_topics,
            alpha: config.alpha,
            eta: config.eta,
        },
        train,
        valid,
        train_truth: GroundTruth {
            thetas: read_matrix(truth.join("train_thetas.bin"))?,
            node_of_doc: read_nodes("train_nodes.txt")?,
        },
        valid_truth: GroundTruth {
            thetas: read_matrix(truth.join("valid_thetas.bin"))?,
            node_of_doc: read_nodes("valid_nodes.txt")?,
        },
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(shared: usize) -> SynthConfig {
        SynthConfig {
            nodes: 3,
            topics: 6,
            shared_topics: shared,
            vocab_size: 40,
            docs_train: 20,
            docs_valid: 5,
            len_min: 15,
            len_max: 25,
            alpha: 50.0 / 6.0,
            eta: 0.1,
            seed: 11,
        }
    }

    #[test]
    fn config_validation() {
        assert!(small(3).validate().is_ok());
        assert!(small(2).validate().is_err());
        let mut c = small(3);
        c.len_min = 30;
        assert!(c.validate().is_err());
        let mut c = small(3);
        c.eta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn topics_per_node_full_setting() {
        let cfg = SynthConfig {
            shared_topics: 10,
            ..SynthConfig::default()
        };
        assert_eq!(cfg.topics_per_node(), 18);
        let m = sample_true_model(
            &SynthConfig {
                vocab_size: 20,
                ..cfg
            },
            &mut rng::seeded(0),
        );
        assert!(m.node_topics.iter().all(|t| t.len() == 18));
        assert!(m.node_topics.iter().all(|t| t[..10] == m.node_topics[0][..10]));
        let mut private: Vec<usize> = m.node_topics.iter().flat_map(|t| t[10..].to_vec()).collect();
        private.sort_unstable();
        private.dedup();
        assert_eq!(private.len(), 40);
    }

    #[test]
    fn all_shared_means_identical_topic_sets() {
        let m = sample_true_model(&small(6), &mut rng::seeded(1));
        assert!(m.node_topics.iter().all(|t| *t == m.node_topics[0]));
    }

    #[test]
    fn beta_rows_are_distributions() {
        for eta in [0.001, 0.01, 1.0, 50.0] {
            let m = sample_true_model(&SynthConfig { eta, ..small(3) }, &mut rng::seeded(2));
            for row in m.beta.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn huge_eta_gives_uniform_rows() {
        let cfg = SynthConfig {
            vocab_size: 100,
            eta: 1e6,
            ..small(3)
        };
        let m = sample_true_model(&cfg, &mut rng::seeded(3));
        let dev = m.beta.iter().map(|&b| (b - 0.01).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-2, "max deviation {dev}");
    }

    #[test]
    fn document_lengths_and_thetas() {
        let cfg = SynthConfig {
            len_min: 150,
            len_max: 250,
            ..small(3)
        };
        let model = sample_true_model(&cfg, &mut rng::seeded(4));
        let (c, gt) = generate_node_corpus(&model, 1, 50, &cfg, "t", &mut rng::seeded(5)).unwrap();
        for (d, row) in c.docs().iter().zip(gt.thetas.rows()) {
            assert!((150..=250).contains(&d.total_tokens()));
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        let owned = &model.node_topics[1];
        for k in 0..cfg.topics {
            if !owned.contains(&k) {
                assert!(gt.thetas.column(k).iter().all(|&x| x == 0.0));
            }
        }
        let total: u64 = c.docs().iter().map(|d| d.total_tokens()).sum();
        assert_eq!(c.vocab().freqs().iter().sum::<f64>(), total as f64);
    }

    #[test]
    fn single_topic_node_gives_one_hot_thetas() {
        let cfg = SynthConfig {
            topics: 3,
            shared_topics: 0,
            ..small(0)
        };
        let model = sample_true_model(&cfg, &mut rng::seeded(6));
        let (_, gt) = generate_node_corpus(&model, 2, 10, &cfg, "t", &mut rng::seeded(7)).unwrap();
        for row in gt.thetas.rows() {
            assert_eq!(row.to_vec(), vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn dataset_is_seeded() {
        let a = generate_dataset(&small(3)).unwrap();
        let b = generate_dataset(&small(3)).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&SynthConfig { seed: 12, ..small(3) }).unwrap();
        assert_ne!(a.model.beta, c.model.beta);
        assert_eq!(a.train.iter().map(|c| c.len()).sum::<usize>(), 60);
        assert_eq!(a.valid_truth.thetas.nrows(), 15);
        assert_eq!(a.pooled_validation().len(), 15);
    }

    #[test]
    fn save_and_load_dataset() {
        let ds = generate_dataset(&small(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
        let first = fs::read(dir.path().join("node0/train.txt")).unwrap();
        save_dataset(&generate_dataset(&small(3)).unwrap(), dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join("node0/train.txt")).unwrap(), first);
    }

    #[test]
    fn manifest_round_trip() {
        let cfg = small(3);
        assert_eq!(SynthConfig::from_manifest(&cfg.to_manifest()).unwrap(), cfg);
    }

    #[test]
    fn empirical_word_distribution_converges() {
        // One topic, 10^6 tokens: total variation to the topic row < 0.02.
        let cfg = SynthConfig {
            nodes: 1,
            topics: 1,
            shared_topics: 1,
            vocab_size: 50,
            docs_train: 4000,
            docs_valid: 0,
            len_min: 250,
            len_max: 250,
            alpha: 1.0,
            eta: 0.5,
            seed: 99,
        };
        let model = sample_true_model(&cfg, &mut rng::seeded(8));
        let (c, _) = generate_node_corpus(&model, 0, cfg.docs_train, &cfg, "t", &mut rng::seeded(9)).unwrap();
        let total: f64 = c.vocab().freqs().iter().sum();
        assert_eq!(total, 1e6);
        let tv: f64 = 0.5
            * c.vocab()
                .freqs()
                .iter()
                .zip(model.beta.row(0))
                .map(|(f, b)| (f / total - b).abs())
                .sum::<f64>();
        assert!(tv < 0.02, "tv = {tv}");
    }
}
