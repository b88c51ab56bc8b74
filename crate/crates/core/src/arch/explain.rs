use serde::{Deserialize, Serialize};

use super::model::AttentionTrace;
use crate::data::PostBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceReport {
    pub index: usize,
    /// Sentence-level attention weight.
    pub weight: f64,
    /// Highest-scoring words with their combined word-level weight.
    pub top_words: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostExplanation {
    pub id: String,
    /// Valid sentences in post order.
    pub sentences: Vec<SentenceReport>,
    /// Sentence indices by descending attention.
    pub ranking: Vec<usize>,
}

impl PostExplanation {
    /// `(w1, w2), (w3, w4), ...` with one group per sentence.
    pub fn word_pairs(&self) -> String {
        self.sentences
            .iter()
            .map(|s| {
                format!(
                    "({})",
                    s.top_words
                        .iter()
                        .map(|(w, _)| w.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Element-wise maximum across groups.
pub fn combine_word_scores(groups: &[&[f64]]) -> Vec<f64> {
    let Some(first) = groups.first() else {
        return Vec::new();
    };
    let mut out = first.to_vec();
    for g in &groups[1..] {
        for (o, &v) in out.iter_mut().zip(g.iter()) {
            *o = o.max(v);
        }
    }
    out
}

/// Indices of the `k` largest scores, highest first; ties keep position order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.truncate(k);
    idx
}

/// Top-`k` words per sentence from the element-wise max of all wl-group
/// attention weights, plus sentences ranked by post-level attention.
pub fn explain<T: Scalar>(
    trace: &AttentionTrace<T>,
    batch: &PostBatch<T>,
    k: usize,
) -> Result<Vec<PostExplanation>> {
    if trace.word.is_empty() {
        return Err(Error::ExplainUnavailable(
            "the architecture has no wl group".into(),
        ));
    }
    let (b, smax, wmax) = batch.dims();
    for w in &trace.word {
        if w.shape() != [b, smax, wmax] {
            return Err(Error::dim(format!(
                "word attention {:?} for a batch of {:?}",
                w.shape(),
                [b, smax, wmax]
            )));
        }
    }
    let groups: Vec<Vec<f64>> = trace.word.iter().map(|t| t.to_f64_vec()).collect();
    let sentence = trace.sentence.to_f64_vec();
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        let mut sentences = Vec::new();
        for (j, words) in batch.tokens[i].iter().enumerate() {
            if words.is_empty() {
                continue;
            }
            let at = (i * smax + j) * wmax;
            let slices: Vec<&[f64]> = groups.iter().map(|g| &g[at..at + words.len()]).collect();
            let combined = combine_word_scores(&slices);
            let top_words = top_k(&combined, k)
                .into_iter()
                .map(|w| (words[w].clone(), combined[w]))
                .collect();
            sentences.push(SentenceReport {
                index: j,
                weight: sentence[i * smax + j],
                top_words,
            });
        }
        let weights: Vec<f64> = sentences.iter().map(|s| s.weight).collect();
        let ranking = top_k(&weights, weights.len())
            .into_iter()
            .map(|r| sentences[r].index)
            .collect();
        out.push(PostExplanation {
            id: batch.ids[i].clone(),
            sentences,
            ranking,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_combination() {
        let single = [0.2, 0.8];
        assert_eq!(combine_word_scores(&[&single]), vec![0.2, 0.8]);
        let combined = combine_word_scores(&[&[0.6, 0.4], &[0.1, 0.9]]);
        assert_eq!(combined, vec![0.6, 0.9]);
        assert_eq!(top_k(&combined, 1), vec![1]);
    }

    #[test]
    fn top_k_bounds_and_ties() {
        assert_eq!(top_k(&[0.5, 0.5, 0.1], 2), vec![0, 1]);
        assert_eq!(top_k(&[0.3], 2), vec![0]);
    }
}
