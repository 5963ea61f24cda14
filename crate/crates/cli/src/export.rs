use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fedtopic::corpus::{load_corpus, project_corpus};
use fedtopic::eval::{topic_descriptions, Weighting};
use fedtopic::model::{get_beta, infer_theta, load_checkpoint, Checkpoint};

use crate::error::{CliError, Result};

fn open(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Topic-word matrix as TSV: a header of terms, then one row per topic.
pub fn export_betas(checkpoint: &Path, out: &Path, top_n: Option<usize>) -> Result<String> {
    let ckpt = open(checkpoint)?;
    let beta = get_beta(&ckpt.weights);
    let mut text = String::from("topic");
    for t in ckpt.vocab.terms() {
        write!(text, "\t{t}").unwrap();
    }
    text.push('\n');
    for (k, row) in beta.rows().into_iter().enumerate() {
        write!(text, "{k}").unwrap();
        for x in row {
            write!(text, "\t{x:e}").unwrap();
        }
        text.push('\n');
    }
    fs::write(out, text)?;
    let mut summary = String::new();
    if let Some(n) = top_n {
        for td in topic_descriptions(beta.view(), &ckpt.vocab, n, Weighting::Renormalized)? {
            let words: Vec<&str> = td.words().iter().map(|w| w.0.as_str()).collect();
            writeln!(summary, "topic {}: {}", td.topic_id(), words.join(" ")).unwrap();
        }
    }
    Ok(summary)
}

/// Document-topic proportions as TSV: document id, then `K` proportions.
/// Terms unknown to the model are ignored.
pub fn infer(checkpoint: &Path, corpus: &Path, out: &Path) -> Result<()> {
    let ckpt = open(checkpoint)?;
    let corpus = load_corpus(corpus)?;
    let corpus = project_corpus(&corpus, &ckpt.vocab);
    let theta = infer_theta(&ckpt.weights, &corpus, &ckpt.config)?;
    let mut text = String::from("doc_id");
    for k in 0..theta.ncols() {
        write!(text, "\ttopic{k}").unwrap();
    }
    text.push('\n');
    for (doc, row) in corpus.docs().iter().zip(theta.rows()) {
        text.push_str(doc.doc_id());
        for x in row {
            write!(text, "\t{x:e}").unwrap();
        }
        text.push('\n');
    }
    fs::write(out, text)?;
    Ok(())
}
