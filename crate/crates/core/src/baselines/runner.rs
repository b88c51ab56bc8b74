use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::features::{
    avg_word_embedding, dense_to_sparse, tfidf_featurize, NgramMode, SparseRow, TfidfVocab,
    MAX_FEATURES,
};
use super::logreg::{br_train, logreg_train, LogRegConfig, LogRegMode};
use super::powerset::lp_encode;
use crate::data::{label_matrix, Embeddings, Example};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::metrics::MetricsReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transform {
    /// Label powerset: one class per observed label combination.
    Lp,
    /// Binary relevance: one binary classifier per label.
    Br,
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(Transform::Lp),
            "br" => Ok(Transform::Br),
            _ => Err(Error::Config(format!(
                "unknown transformation {s:?} (expected lp or br)"
            ))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Lp => "lp",
            Transform::Br => "br",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    WordTfidf,
    CharTfidf,
    /// Averaged vectors of the named word source.
    AvgEmbedding(String),
}

impl FromStr for FeatureKind {
    type Err = Error;

    /// `word`, `char`, or `avg:<source>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "word" => Ok(FeatureKind::WordTfidf),
            "char" => Ok(FeatureKind::CharTfidf),
            other => match other.strip_prefix("avg:") {
                Some(id) if !id.is_empty() => Ok(FeatureKind::AvgEmbedding(id.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown features {s:?} (expected word, char or avg:<source>)"
                ))),
            },
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::WordTfidf => f.write_str("word"),
            FeatureKind::CharTfidf => f.write_str("char"),
            FeatureKind::AvgEmbedding(id) => write!(f, "avg:{id}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub transform: Transform,
    pub features: FeatureKind,
    pub logreg: LogRegConfig,
    pub max_features: usize,
}

impl BaselineConfig {
    pub fn new(transform: Transform, features: FeatureKind) -> Self {
        BaselineConfig {
            transform,
            features,
            logreg: LogRegConfig::default(),
            max_features: MAX_FEATURES,
        }
    }
}

/// Preprocessed text of a tokenized post, sentences separated by `. `.
pub fn example_text(e: &Example) -> String {
    e.sentences
        .iter()
        .map(|s| s.join(" "))
        .collect::<Vec<_>>()
        .join(". ")
}

fn featurize(
    cfg: &BaselineConfig,
    train: &[Example],
    test: &[Example],
    emb: &Embeddings,
) -> Result<(Vec<SparseRow>, Vec<SparseRow>)> {
    let texts = |xs: &[Example]| xs.iter().map(example_text).collect::<Vec<_>>();
    match &cfg.features {
        FeatureKind::WordTfidf | FeatureKind::CharTfidf => {
            let mode = if cfg.features == FeatureKind::WordTfidf {
                NgramMode::Word
            } else {
                NgramMode::Char
            };
            let vocab = TfidfVocab::fit(&texts(train), mode, cfg.max_features)?;
            Ok((
                tfidf_featurize(&texts(train), &vocab),
                tfidf_featurize(&texts(test), &vocab),
            ))
        }
        FeatureKind::AvgEmbedding(id) => {
            let table = emb
                .word
                .get(id)
                .ok_or_else(|| Error::Config(format!("no word embeddings for source {id}")))?;
            let rows = |xs: &[Example]| {
                xs.iter()
                    .map(|e| {
                        let tokens: Vec<&String> = e.sentences.iter().flatten().collect();
                        avg_word_embedding(&tokens, table).map(|v| dense_to_sparse(&v))
                    })
                    .collect::<Result<Vec<_>>>()
            };
            Ok((rows(train)?, rows(test)?))
        }
    }
}

/// Trains on `train` and returns predicted label sets for `test`.
pub fn baseline_predict(
    cfg: &BaselineConfig,
    train: &[Example],
    test: &[Example],
    emb: &Embeddings,
    num_labels: usize,
) -> Result<Vec<LabelSet>> {
    let (xtr, xte) = featurize(cfg, train, test, emb)?;
    let y = label_matrix(train, num_labels)?;
    match cfg.transform {
        Transform::Lp => {
            let (targets, mapping) = lp_encode(y.rows())?;
            let model = logreg_train(&xtr, &targets, LogRegMode::Multiclass, &cfg.logreg)?;
            xte.iter()
                .map(|r| mapping.decode(model.predict(r)))
                .collect()
        }
        Transform::Br => {
            let model = br_train(&xtr, &y, &cfg.logreg)?;
            Ok(xte.iter().map(|r| model.predict(r)).collect())
        }
    }
}

pub fn run_baseline(
    cfg: &BaselineConfig,
    train: &[Example],
    test: &[Example],
    emb: &Embeddings,
    label_names: &[String],
) -> Result<MetricsReport> {
    let pred = baseline_predict(cfg, train, test, emb, label_names.len())?;
    let gold: Vec<LabelSet> = test.iter().map(|e| e.labels.clone()).collect();
    MetricsReport::compute(&pred, &gold, label_names)
}
