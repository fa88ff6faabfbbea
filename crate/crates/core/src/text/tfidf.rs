use std::collections::{HashMap, HashSet};

use ndarray::Array2;

use crate::dataset::{Document, EncodedDataset};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_FEATURES: usize = 5000;

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Unigrams followed by space-joined bigrams.
fn ngrams(tokens: &[String]) -> impl Iterator<Item = String> + '_ {
    tokens
        .iter()
        .cloned()
        .chain(tokens.windows(2).map(|w| format!("{} {}", w[0], w[1])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    index: HashMap<String, usize>,
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    corpus_size: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Terms in index order (most frequent first).
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, idx: usize) -> usize {
        self.doc_freq[idx]
    }

    pub fn corpus_size(&self) -> usize {
        self.corpus_size
    }
}

/// Keeps the `max_features` unigrams and bigrams with the highest total
/// count; equal counts are ordered lexicographically.
pub fn build_vocab(corpus: &[Document], max_features: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::Data("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for doc in corpus {
        let tokens = tokenize(&doc.text);
        let mut seen = HashSet::new();
        for g in ngrams(&tokens) {
            let entry = counts.entry(g.clone()).or_default();
            entry.0 += 1;
            if seen.insert(g) {
                entry.1 += 1;
            }
        }
    }
    let mut ranked: Vec<(String, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_features);

    let terms: Vec<String> = ranked.iter().map(|(t, _)| t.clone()).collect();
    let doc_freq = ranked.iter().map(|(_, (_, df))| *df).collect();
    let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        index,
        terms,
        doc_freq,
        corpus_size: corpus.len(),
    })
}

/// Smoothed-idf TF-IDF with L2-normalized rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
}

impl TfidfModel {
    pub fn new(vocabulary: Vocabulary) -> Self {
        let n = vocabulary.corpus_size as f64;
        let idf = vocabulary
            .doc_freq
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect();
        Self { vocabulary, idf }
    }

    pub fn fit(corpus: &[Document], max_features: usize) -> Result<Self> {
        Ok(Self::new(build_vocab(corpus, max_features)?))
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    /// Encodes documents; out-of-vocabulary terms are ignored and a
    /// document with no known term maps to the zero vector.
    pub fn encode(&self, docs: &[Document]) -> Result<EncodedDataset> {
        let mut m = Array2::zeros((docs.len(), self.dim()));
        for (i, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text);
            let mut row = m.row_mut(i);
            for g in ngrams(&tokens) {
                if let Some(j) = self.vocabulary.index_of(&g) {
                    row[j] += 1.0;
                }
            }
            for (v, idf) in row.iter_mut().zip(&self.idf) {
                *v *= idf;
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        EncodedDataset::new(
            m,
            docs.iter().map(|d| d.label).collect(),
            docs.iter().map(|d| d.domain_tag.clone()).collect(),
        )
    }
}
