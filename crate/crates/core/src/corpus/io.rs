//! Text formats.
//!
//! * corpus: one document per line, whitespace-separated tokens. A token
//!   `term:N` (N a positive decimal integer) stands for N occurrences of
//!   `term`; any other token counts once.
//! * `<corpus>.vocab`: `term<TAB>freq` per line, canonical order.
//! * `<corpus>.ids`: one document id per line.
//! * `<corpus>.emb`: header line `E <dim>`, then one line of `dim`
//!   space-separated reals per document.
//!
//! Sidecars are optional on load: without `.vocab` the vocabulary is counted
//! from the tokens, without `.ids` documents are named by line index.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{build_vocabulary, BowCorpus, BowDocument, CorpusError, Result, Vocabulary};

pub fn sidecar_path(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn check_term(path: &Path, term: &str) -> Result<()> {
    if term.is_empty() || term.chars().any(char::is_whitespace) {
        return Err(parse_err(path, 0, format!("term {term:?} cannot be written to a text file")));
    }
    Ok(())
}

pub fn save_vocabulary(vocab: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (term, freq) in vocab.iter() {
        check_term(path, term)?;
        writeln!(out, "{term}\t{freq}").unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let (term, freq) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected term<TAB>freq"))?;
        let freq: f64 = freq
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad frequency {freq:?}")))?;
        if term.is_empty() {
            return Err(parse_err(path, i + 1, "empty term"));
        }
        pairs.push((term.to_string(), freq));
    }
    Vocabulary::from_pairs(pairs).map_err(|e| parse_err(path, 0, e.to_string()))
}

/// Writes the corpus file and its `.vocab`, `.ids` and (if present) `.emb` sidecars.
pub fn save_corpus(corpus: &BowCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let vocab = corpus.vocab();
    let mut text = String::new();
    let mut ids = String::new();
    for doc in corpus.docs() {
        if doc.doc_id().contains(['\n', '\r']) {
            return Err(parse_err(path, 0, format!("document id {:?} contains a newline", doc.doc_id())));
        }
        writeln!(ids, "{}", doc.doc_id()).unwrap();
        let mut first = true;
        for &(p, c) in doc.entries() {
            let term = vocab.term(p as usize).expect("corpus invariant: position in vocabulary");
            check_term(path, term)?;
            if !first {
                text.push(' ');
            }
            first = false;
            write!(text, "{term}:{c}").unwrap();
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    fs::write(sidecar_path(path, "ids"), ids)?;
    save_vocabulary(vocab, sidecar_path(path, "vocab"))?;
    let emb_path = sidecar_path(path, "emb");
    match corpus.embeddings() {
        Some(e) => save_embeddings(e, &emb_path)?,
        None if emb_path.exists() => fs::remove_file(&emb_path)?,
        None => {}
    }
    Ok(())
}

fn split_token(tok: &str) -> (&str, Option<&str>) {
    match tok.rsplit_once(':') {
        Some((term, n)) if !term.is_empty() && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => {
            (term, Some(n))
        }
        _ => (tok, None),
    }
}

/// Loads a corpus written by [`save_corpus`] or a raw tokenized text file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<BowCorpus> {
    load_corpus_filtered(path, 1)
}

/// Like [`load_corpus`]; when no `.vocab` sidecar exists, terms seen fewer
/// than `min_count` times are dropped from the counted vocabulary.
pub fn load_corpus_filtered(path: impl AsRef<Path>, min_count: usize) -> Result<BowCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut docs: Vec<Vec<(String, u32)>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut doc = Vec::new();
        for tok in line.split_whitespace() {
            let (term, count) = split_token(tok);
            let count = match count {
                None => 1,
                Some(n) => n
                    .parse::<u32>()
                    .map_err(|_| parse_err(path, i + 1, format!("token count out of range in {tok:?}")))?,
            };
            if count == 0 {
                return Err(parse_err(path, i + 1, format!("token count 0 in {tok:?}")));
            }
            doc.push((term.to_string(), count));
        }
        docs.push(doc);
    }

    let vocab_path = sidecar_path(path, "vocab");
    let (vocab, strict) = if vocab_path.exists() {
        (load_vocabulary(&vocab_path)?, true)
    } else {
        let expanded: Vec<Vec<&str>> = docs
            .iter()
            .map(|d| d.iter().flat_map(|(t, c)| std::iter::repeat_n(t.as_str(), *c as usize)).collect())
            .collect();
        (build_vocabulary(&expanded, min_count)?, false)
    };

    let ids_path = sidecar_path(path, "ids");
    let ids: Vec<String> = if ids_path.exists() {
        let ids: Vec<String> = fs::read_to_string(&ids_path)?.lines().map(str::to_string).collect();
        if ids.len() != docs.len() {
            return Err(parse_err(
                &ids_path,
                ids.len(),
                format!("{} ids for {} documents", ids.len(), docs.len()),
            ));
        }
        ids
    } else {
        (0..docs.len()).map(|i| i.to_string()).collect()
    };

    let mut bow = Vec::with_capacity(docs.len());
    for (i, (doc, id)) in docs.into_iter().zip(ids).enumerate() {
        let mut counts: std::collections::BTreeMap<u32, u32> = Default::default();
        for (term, c) in doc {
            match vocab.position(&term) {
                Some(p) => *counts.entry(p as u32).or_default() += c,
                None if strict => {
                    return Err(parse_err(path, i + 1, format!("term {term:?} is not in {}", vocab_path.display())))
                }
                None => {}
            }
        }
        bow.push(BowDocument::new(id, counts.into_iter().collect())?);
    }

    let emb_path = sidecar_path(path, "emb");
    let embeddings = if emb_path.exists() {
        Some(load_embeddings(&emb_path)?)
    } else {
        None
    };
    BowCorpus::new(vocab, bow, embeddings)
}

pub fn save_embeddings(e: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("E {}\n", e.ncols());
    for row in e.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "missing `E <dim>` header"))?;
    let dim: usize = header
        .strip_prefix("E ")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("bad header {header:?}")))?;
    if dim == 0 {
        return Err(CorpusError::EmptyEmbedding);
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let values = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        if values.len() != dim {
            return Err(parse_err(path, i + 2, format!("expected {dim} values, found {}", values.len())));
        }
        data.extend(values);
        rows += 1;
    }
    Ok(Array2::from_shape_vec((rows, dim), data).expect("row lengths checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn raw_text_builds_vocabulary() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        fs::write(&path, "b a b\n\nc:3 a\n").unwrap();
        let c = load_corpus(&path).unwrap();
        assert_eq!(c.vocab().terms(), ["a", "b", "c"]);
        assert_eq!(c.vocab().freqs(), [2.0, 2.0, 3.0]);
        assert_eq!(c.len(), 3);
        assert_eq!(c.docs()[0].entries(), [(0, 1), (1, 2)]);
        assert!(c.docs()[1].entries().is_empty());
        assert_eq!(c.docs()[2].entries(), [(0, 1), (2, 3)]);
        assert_eq!(c.docs()[2].doc_id(), "2");
    }

    #[test]
    fn min_count_filters_raw_text() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        fs::write(&path, "a a b\n").unwrap();
        let c = load_corpus_filtered(&path, 2).unwrap();
        assert_eq!(c.vocab().terms(), ["a"]);
        assert_eq!(c.docs()[0].total_tokens(), 2);
    }

    #[test]
    fn zero_count_is_a_parse_error_with_line() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        fs::write(&path, "a\nb:0\n").unwrap();
        match load_corpus(&path).unwrap_err() {
            CorpusError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn embeddings_row_mismatch() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        fs::write(&path, "a\nb\n").unwrap();
        fs::write(sidecar_path(&path, "emb"), "E 2\n0.5 1\n").unwrap();
        assert!(matches!(
            load_corpus(&path).unwrap_err(),
            CorpusError::EmbeddingRows { rows: 1, docs: 2 }
        ));
        fs::write(sidecar_path(&path, "emb"), "E 2\n0.5 1\n1\n").unwrap();
        assert!(matches!(load_corpus(&path).unwrap_err(), CorpusError::Parse { line: 3, .. }));
    }

    #[test]
    fn unknown_term_with_vocab_sidecar() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        fs::write(&path, "a:1 q:2\n").unwrap();
        fs::write(sidecar_path(&path, "vocab"), "a\t1\n").unwrap();
        assert!(matches!(load_corpus(&path).unwrap_err(), CorpusError::Parse { line: 1, .. }));
    }

    #[test]
    fn colon_terms_survive_round_trip() {
        let dir = tmp();
        let path = dir.path().join("c.txt");
        let vocab = Vocabulary::from_pairs([("ratio:3", 1.0), ("x:", 1.0)]).unwrap();
        let c = BowCorpus::new(
            vocab,
            vec![BowDocument::new("d0", vec![(0, 1), (1, 4)]).unwrap()],
            None,
        )
        .unwrap();
        save_corpus(&c, &path).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
    }

    fn arb_corpus() -> impl Strategy<Value = BowCorpus> {
        (
            prop::collection::btree_map("[a-z]{1,4}", 0u32..100, 1..8),
            1usize..6,
            prop::bool::ANY,
        )
            .prop_flat_map(|(terms, n_docs, emb)| {
                let v = terms.len() as u32;
                let docs = prop::collection::vec(prop::collection::btree_map(0..v, 1u32..5, 0..6), n_docs);
                let e = if emb {
                    prop::collection::vec(-1e3f64..1e3, n_docs * 3).prop_map(Some).boxed()
                } else {
                    Just(None).boxed()
                };
                (Just(terms), docs, e, "[a-z0-9_-]{1,6}")
            })
            .prop_map(|(terms, docs, emb, prefix)| {
                let n = docs.len();
                let vocab = Vocabulary::from_pairs(terms.into_iter().map(|(t, f)| (t, f as f64 * 0.5))).unwrap();
                let docs = docs
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| BowDocument::new(format!("{prefix}{i}"), d.into_iter().collect()).unwrap())
                    .collect();
                let emb = emb.map(|e| Array2::from_shape_vec((n, 3), e).unwrap());
                BowCorpus::new(vocab, docs, emb).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn save_load_round_trip(c in arb_corpus()) {
            let dir = tmp();
            let path = dir.path().join("c.txt");
            save_corpus(&c, &path).unwrap();
            prop_assert_eq!(load_corpus(&path).unwrap(), c);
        }
    }
}
