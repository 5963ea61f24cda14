use std::collections::{BTreeMap, HashMap};

use super::{CorpusError, Result};

/// Ordered term list with per-term frequencies.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    freq: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        // `index` is derived from `terms`.
        self.terms == other.terms && self.freq == other.freq
    }
}

impl Vocabulary {
    /// Builds a canonical vocabulary from `(term, freq)` pairs in any order.
    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut pairs: Vec<(String, f64)> = pairs.into_iter().map(|(t, f)| (t.into(), f)).collect();
        pairs.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(CorpusError::DuplicateTerm(w[0].0.clone()));
            }
        }
        for (term, freq) in &pairs {
            if !(freq.is_finite() && *freq >= 0.0) {
                return Err(CorpusError::InvalidFrequency {
                    term: term.clone(),
                    freq: *freq,
                });
            }
        }
        let (terms, freq): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self { terms, freq, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freq
    }

    pub fn term(&self, pos: usize) -> Option<&str> {
        self.terms.get(pos).map(String::as_str)
    }

    pub fn position(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn freq(&self, term: &str) -> Option<f64> {
        self.position(term).map(|i| self.freq[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.terms.iter().map(String::as_str).zip(self.freq.iter().copied())
    }
}

/// Counts tokens across documents and keeps those seen at least `min_count` times.
pub fn build_vocabulary<D, T>(tokenized_docs: &[D], min_count: usize) -> Result<Vocabulary>
where
    D: AsRef<[T]>,
    T: AsRef<str>,
{
    if min_count == 0 {
        return Err(CorpusError::InvalidMinCount);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in tokenized_docs {
        for tok in doc.as_ref() {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let vocab = Vocabulary::from_pairs(
        counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, c)| (t, c as f64)),
    )?;
    if vocab.is_empty() {
        return Err(CorpusError::EmptyVocabulary { min_count });
    }
    Ok(vocab)
}

/// Union of the term sets; each merged frequency is the sum of the inputs'.
pub fn merge_vocabularies(vocabs: &[Vocabulary]) -> Result<Vocabulary> {
    if vocabs.is_empty() {
        return Err(CorpusError::NothingToMerge);
    }
    let mut merged: BTreeMap<&str, f64> = BTreeMap::new();
    for vocab in vocabs {
        for (term, freq) in vocab.iter() {
            *merged.entry(term).or_insert(0.0) += freq;
        }
    }
    Vocabulary::from_pairs(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(pairs: &[(&str, f64)]) -> Vocabulary {
        Vocabulary::from_pairs(pairs.iter().map(|&(t, f)| (t, f))).unwrap()
    }

    #[test]
    fn build_counts_tokens() {
        let vocab = build_vocabulary(&[vec!["a", "b", "a"]], 1).unwrap();
        assert_eq!(vocab.terms(), ["a", "b"]);
        assert_eq!(vocab.freqs(), [2.0, 1.0]);
    }

    #[test]
    fn build_sorts_terms() {
        let vocab = build_vocabulary(&[vec!["b"], vec!["a", "b"]], 1).unwrap();
        assert_eq!(vocab.terms(), ["a", "b"]);
        assert_eq!(vocab.freqs(), [1.0, 2.0]);
    }

    #[test]
    fn build_rejects_empty_result() {
        let err = build_vocabulary(&[vec!["a"]], 2).unwrap_err();
        assert!(matches!(err, CorpusError::EmptyVocabulary { min_count: 2 }));
        assert!(matches!(
            build_vocabulary(&[vec!["a"]], 0),
            Err(CorpusError::InvalidMinCount)
        ));
    }

    #[test]
    fn byte_order_not_locale_order() {
        let vocab = build_vocabulary(&[vec!["b", "B", "é", "a"]], 1).unwrap();
        assert_eq!(vocab.terms(), ["B", "a", "b", "é"]);
        for (i, t) in vocab.terms().iter().enumerate() {
            assert_eq!(vocab.position(t), Some(i));
        }
    }

    #[test]
    fn from_pairs_validates() {
        assert!(matches!(
            Vocabulary::from_pairs([("a", 1.0), ("a", 2.0)]),
            Err(CorpusError::DuplicateTerm(_))
        ));
        assert!(matches!(
            Vocabulary::from_pairs([("a", -1.0)]),
            Err(CorpusError::InvalidFrequency { .. })
        ));
    }

    #[test]
    fn merge_sums_frequencies() {
        let merged = merge_vocabularies(&[v(&[("a", 2.0), ("b", 1.0)]), v(&[("b", 3.0), ("c", 1.0)])]).unwrap();
        assert_eq!(merged, v(&[("a", 2.0), ("b", 4.0), ("c", 1.0)]));
    }

    #[test]
    fn merge_identity_and_doubling() {
        let a = v(&[("x", 1.5), ("y", 0.0)]);
        assert_eq!(merge_vocabularies(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(merge_vocabularies(&[a.clone(), a]).unwrap(), v(&[("x", 3.0), ("y", 0.0)]));
        assert!(matches!(merge_vocabularies(&[]), Err(CorpusError::NothingToMerge)));
    }

    fn arb_vocab() -> impl Strategy<Value = Vocabulary> {
        // Small integer frequencies keep f64 sums exact, so order cannot matter.
        prop::collection::btree_map("[a-e]{1,2}", 0u32..50, 1..6)
            .prop_map(|m| Vocabulary::from_pairs(m.into_iter().map(|(t, f)| (t, f as f64))).unwrap())
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in arb_vocab(), b in arb_vocab(), c in arb_vocab()) {
            let ab = merge_vocabularies(&[a.clone(), b.clone()]).unwrap();
            let ba = merge_vocabularies(&[b.clone(), a.clone()]).unwrap();
            prop_assert_eq!(&ab, &ba);
            let left = merge_vocabularies(&[ab, c.clone()]).unwrap();
            let bc = merge_vocabularies(&[b.clone(), c.clone()]).unwrap();
            let right = merge_vocabularies(&[a.clone(), bc]).unwrap();
            prop_assert_eq!(&left, &right);
            prop_assert_eq!(&left, &merge_vocabularies(&[c, a, b]).unwrap());
        }
    }
}
