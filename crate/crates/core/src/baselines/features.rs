//! TF-IDF and averaged-embedding post features.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};

/// Sparse row: `(feature index, value)` pairs in increasing index order.
pub type SparseRow = Vec<(usize, f64)>;

pub const MAX_FEATURES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NgramMode {
    /// Word unigrams and bigrams.
    Word,
    /// Character 1- to 5-grams over the whole text, spaces included.
    Char,
}

fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?'))
        .filter(|w| !w.is_empty())
        .collect()
}

fn ngrams(text: &str, mode: NgramMode) -> Vec<String> {
    let mut out = Vec::new();
    match mode {
        NgramMode::Word => {
            let w = words(text);
            out.extend(w.iter().map(|s| s.to_string()));
            out.extend(w.windows(2).map(|p| format!("{} {}", p[0], p[1])));
        }
        NgramMode::Char => {
            let chars: Vec<char> = text.chars().collect();
            for n in 1..=5 {
                out.extend(chars.windows(n).map(|c| c.iter().collect::<String>()));
            }
        }
    }
    out
}

/// `tf = raw count`, `idf = ln((1 + n) / (1 + df)) + 1`, rows L2-normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocab {
    pub mode: NgramMode,
    features: Vec<String>,
    idf: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TfidfVocab {
    /// Keeps the `max_features` most frequent n-grams (ties broken
    /// lexicographically); feature indices follow lexicographic order.
    pub fn fit<S: AsRef<str>>(texts: &[S], mode: NgramMode, max_features: usize) -> Result<Self> {
        let mut freq: HashMap<String, usize> = HashMap::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        for t in texts {
            let grams = ngrams(t.as_ref(), mode);
            let mut seen = std::collections::HashSet::new();
            for g in grams {
                *freq.entry(g.clone()).or_default() += 1;
                if seen.insert(g.clone()) {
                    *df.entry(g).or_default() += 1;
                }
            }
        }
        if freq.is_empty() {
            return Err(Error::EmptyInput("no n-grams in the corpus".into()));
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_features);
        let mut features: Vec<String> = ranked.into_iter().map(|(g, _)| g).collect();
        features.sort();
        let n = texts.len() as f64;
        let idf = features
            .iter()
            .map(|f| ((1.0 + n) / (1.0 + df[f] as f64)).ln() + 1.0)
            .collect();
        Ok(Self::assemble(mode, features, idf))
    }

    fn assemble(mode: NgramMode, features: Vec<String>, idf: Vec<f64>) -> Self {
        let index = features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
        TfidfVocab {
            mode,
            features,
            idf,
            index,
        }
    }

    /// Rebuilds the lookup after deserialization.
    pub fn reindex(self) -> Self {
        Self::assemble(self.mode, self.features, self.idf)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn transform(&self, text: &str) -> SparseRow {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for g in ngrams(text, self.mode) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut row: SparseRow = counts
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i]))
            .collect();
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    }
}

pub fn tfidf_featurize<S: AsRef<str>>(texts: &[S], vocab: &TfidfVocab) -> Vec<SparseRow> {
    texts.iter().map(|t| vocab.transform(t.as_ref())).collect()
}

/// Mean of the token vectors; unknown tokens count as zero vectors.
pub fn avg_word_embedding<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("no tokens to average".into()));
    }
    let mut sum = vec![0.0; table.dim()];
    for t in tokens {
        if let Some(v) = table.get(t.as_ref()) {
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
    }
    let n = tokens.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn dense_to_sparse(row: &[f64]) -> SparseRow {
    row.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect()
}
