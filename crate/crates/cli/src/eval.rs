use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fedtopic::corpus::{project_corpus, Vocabulary};
use fedtopic::eval::{
    amwmd, append_scores, dss, topic_descriptions, tss, tss_baseline, EmbeddingTable, ScoreRow, TopicDescription,
    Weighting,
};
use fedtopic::model::{get_beta, infer_theta, load_checkpoint, Checkpoint};
use fedtopic::rng::{self, streams};
use fedtopic::synthgen::SynthDataset;
use ndarray::Array2;

use crate::data::{checkpoints_in, discover, run_index, WORD_EMBEDDINGS};
use crate::error::{CliError, Result};

pub struct EvalArgs<'a> {
    pub dataset: &'a Path,
    pub models: Option<&'a Path>,
    pub checkpoints: &'a [String],
    pub embeddings: Option<&'a Path>,
    pub out: Option<&'a Path>,
    pub runs: Option<usize>,
    pub baseline: Option<usize>,
    pub truth: bool,
    pub top_n: usize,
    pub uniform: bool,
}

fn parse_named(spec: &str) -> Result<(String, PathBuf)> {
    let (name, path) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("checkpoint {spec:?} is not name=path")))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Topic-word matrix of `ckpt` over `target`, with mass on unknown terms
/// dropped and rows renormalized.
fn beta_over(ckpt: &Checkpoint, target: &Vocabulary) -> Array2<f64> {
    let beta = get_beta(&ckpt.weights);
    if ckpt.vocab == *target {
        return beta;
    }
    let mut out = Array2::zeros((beta.nrows(), target.len()));
    for (v, term) in ckpt.vocab.terms().iter().enumerate() {
        if let Some(p) = target.position(term) {
            out.column_mut(p).assign(&beta.column(v));
        }
    }
    for mut row in out.rows_mut() {
        let s = row.sum();
        if s > 0.0 {
            row /= s;
        } else {
            row.fill(1.0 / target.len() as f64);
        }
    }
    out
}

fn row(scenario: &str, metric: &str, ds: Option<&SynthDataset>, run: usize, value: f64) -> ScoreRow {
    ScoreRow {
        scenario: scenario.to_string(),
        metric: metric.to_string(),
        k_shared: ds.map(|d| d.config.shared_topics),
        eta: ds.map(|d| d.config.eta),
        run,
        value,
    }
}

fn truth_scores(ds: &SynthDataset, models: &[(String, Checkpoint)], args: &EvalArgs<'_>, run: usize) -> Result<Vec<ScoreRow>> {
    let valid = ds.pooled_validation();
    let truth = &ds.valid_truth.thetas;
    let mut rows = Vec::new();
    if args.truth {
        rows.push(row("truth", "dss", Some(ds), run, dss(truth.view(), truth.view())?));
        rows.push(row("truth", "tss", Some(ds), run, tss(ds.model.beta.view(), ds.model.beta.view())?));
    }
    let mut node_scores = Vec::new();
    for (name, ckpt) in models {
        let corpus = project_corpus(&valid, &ckpt.vocab);
        let theta = infer_theta(&ckpt.weights, &corpus, &ckpt.config)?;
        let d = dss(truth.view(), theta.view())?;
        let t = tss(ds.model.beta.view(), beta_over(ckpt, valid.vocab()).view())?;
        rows.push(row(name, "dss", Some(ds), run, d));
        rows.push(row(name, "tss", Some(ds), run, t));
        if name.starts_with("node") {
            node_scores.push((d, t));
        }
    }
    if !node_scores.is_empty() {
        let n = node_scores.len() as f64;
        rows.push(row("noncollab", "dss", Some(ds), run, node_scores.iter().map(|s| s.0).sum::<f64>() / n));
        rows.push(row("noncollab", "tss", Some(ds), run, node_scores.iter().map(|s| s.1).sum::<f64>() / n));
    }
    if let Some(reps) = args.baseline {
        let mut rng = rng::stream(ds.config.seed, streams::BASELINE);
        let b = tss_baseline(ds.config.eta, ds.config.topics, ds.config.vocab_size, reps, &mut rng)?;
        rows.push(row("baseline", "tss", Some(ds), run, b));
    }
    Ok(rows)
}

fn amwmd_scores(
    emb: &EmbeddingTable,
    models: &[(String, Checkpoint)],
    args: &EvalArgs<'_>,
    ds: Option<&SynthDataset>,
    run: usize,
) -> Result<Vec<ScoreRow>> {
    let weighting = if args.uniform { Weighting::Uniform } else { Weighting::Renormalized };
    let tds: BTreeMap<&str, Vec<TopicDescription>> = models
        .iter()
        .map(|(name, c)| Ok((name.as_str(), topic_descriptions(get_beta(&c.weights).view(), &c.vocab, args.top_n, weighting)?)))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (node, node_tds) in tds.iter().filter(|(n, _)| n.starts_with("node")) {
        for (model, model_tds) in &tds {
            let a = amwmd(node_tds, model_tds, emb)?;
            rows.push(row(&format!("{model}@{node}"), "amwmd", ds, run, a.sum));
            rows.push(row(&format!("{model}@{node}"), "amwmd_norm", ds, run, a.normalized));
        }
    }
    Ok(rows)
}

pub fn eval(args: &EvalArgs<'_>) -> Result<Vec<ScoreRow>> {
    let explicit = args.checkpoints.iter().map(|s| parse_named(s)).collect::<Result<Vec<_>>>()?;
    let dataset_dirs = if args.dataset.join(crate::data::MANIFEST).is_file() || !args.dataset.is_dir() {
        vec![PathBuf::new()]
    } else {
        discover(args.dataset)?
    };
    let mut all = Vec::new();
    for rel in dataset_dirs {
        let run = run_index(&rel);
        if args.runs.is_some_and(|r| run >= r) {
            continue;
        }
        let dir = args.dataset.join(&rel);
        let ds = if dir.join(crate::data::MANIFEST).is_file() {
            Some(fedtopic::synthgen::load_dataset(&dir)?)
        } else {
            None
        };
        let mut paths = match args.models {
            Some(m) => checkpoints_in(&m.join(&rel))?,
            None => Vec::new(),
        };
        paths.extend(explicit.iter().cloned());
        let models = paths
            .into_iter()
            .map(|(n, p)| Ok((n, load_checkpoint(&p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)))
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        match &ds {
            Some(ds) => rows.extend(truth_scores(ds, &models, args, run)?),
            None if args.embeddings.is_none() => {
                return Err(CliError::Config(format!(
                    "{} has no ground truth; pass --embeddings to score with AMWMD",
                    dir.display()
                )))
            }
            None => {}
        }
        let emb_path = args.embeddings.map(Path::to_path_buf).or_else(|| {
            let p = dir.join(WORD_EMBEDDINGS);
            p.is_file().then_some(p)
        });
        if let Some(p) = emb_path {
            let emb = EmbeddingTable::load(&p)?;
            rows.extend(amwmd_scores(&emb, &models, args, ds.as_ref(), run)?);
        }
        if let Some(out) = args.out {
            append_scores(out, &rows)?;
        }
        all.extend(rows);
    }
    Ok(all)
}

/// Mean of every `(scenario, metric)` over runs.
pub fn summarize(rows: &[ScoreRow]) -> Vec<(String, String, f64, usize)> {
    let mut acc: BTreeMap<(String, String, Option<usize>, String), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.scenario.clone(), r.metric.clone(), r.k_shared, r.eta.map(|e| e.to_string()).unwrap_or_default());
        let e = acc.entry(key).or_default();
        e.0 += r.value;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|((s, m, k, eta), (sum, n))| {
            let label = match k {
                Some(k) => format!("{s} [K_shared={k}, eta={eta}]"),
                None => s,
            };
            (label, m, sum / n as f64, n)
        })
        .collect()
}
