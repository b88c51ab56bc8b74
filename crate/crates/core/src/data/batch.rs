use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Example;
use super::embeddings::{EmbeddingTable, SentenceStore};
use crate::error::{Error, Result};
use crate::labels::{LabelMatrix, LabelSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Word tables and sentence stores keyed by source id.
#[derive(Clone, Debug, Default)]
pub struct Embeddings {
    pub word: BTreeMap<String, EmbeddingTable>,
    pub sentence: BTreeMap<String, SentenceStore>,
}

impl Embeddings {
    pub fn dims(&self) -> BTreeMap<String, usize> {
        self.word
            .iter()
            .map(|(k, t)| (k.clone(), t.dim()))
            .chain(self.sentence.iter().map(|(k, s)| (k.clone(), s.dim())))
            .collect()
    }

    /// Checks that every example has vectors in each sentence store, with
    /// the same sentence count as the splitter produced.
    pub fn check_coverage(&self, examples: &[Example]) -> Result<()> {
        for (name, store) in &self.sentence {
            for e in examples {
                match store.sentence_count(&e.id) {
                    None => {
                        return Err(Error::Coverage {
                            post_id: e.id.clone(),
                            what: format!("{name} sentence vectors"),
                        })
                    }
                    Some(c) if c != e.sentences.len() => {
                        return Err(Error::Coverage {
                            post_id: e.id.clone(),
                            what: format!(
                                "{name} vectors matching its {} sentences (file has {c})",
                                e.sentences.len()
                            ),
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}

/// Upper bounds for padding; a batch is padded to the longest post and
/// sentence it contains, capped by these.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchShape {
    pub max_sentences: usize,
    pub max_words: usize,
}

/// Padded inputs for a group of posts.
///
/// Word tensors are `[B, S, W, d]`, sentence tensors `[B, S, d]`, masks are
/// `[B, S, W]` and `[B, S]` with contiguous valid prefixes.
#[derive(Clone, Debug)]
pub struct PostBatch<T> {
    pub ids: Vec<String>,
    /// Words kept after truncation, per post and sentence.
    pub tokens: Vec<Vec<Vec<String>>>,
    pub words: BTreeMap<String, Tensor<T>>,
    pub sentences: BTreeMap<String, Tensor<T>>,
    pub word_mask: Tensor<T>,
    pub sentence_mask: Tensor<T>,
    pub labels: Vec<LabelSet>,
}

impl<T: Scalar> PostBatch<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `(B, S, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.word_mask.shape();
        (s[0], s[1], s[2])
    }

    pub fn label_matrix(&self, num_labels: usize) -> Result<LabelMatrix> {
        LabelMatrix::new(num_labels, self.labels.clone())
    }

    /// Builds a batch padded to exactly `s` sentences and `w` words.
    pub fn build_padded(
        examples: &[&Example],
        emb: &Embeddings,
        s: usize,
        w: usize,
    ) -> Result<Self> {
        let b = examples.len();
        if b == 0 {
            return Err(Error::EmptyInput("batch without posts".into()));
        }
        if s == 0 || w == 0 {
            return Err(Error::Config("batch padding must be positive".into()));
        }
        let mut word_mask = vec![T::zero(); b * s * w];
        let mut sentence_mask = vec![T::zero(); b * s];
        let mut tokens = Vec::with_capacity(b);
        for (i, e) in examples.iter().enumerate() {
            let kept: Vec<Vec<String>> = e
                .sentences
                .iter()
                .take(s)
                .map(|sent| sent.iter().take(w).cloned().collect())
                .collect();
            for (j, sent) in kept.iter().enumerate() {
                if sent.is_empty() {
                    continue;
                }
                sentence_mask[i * s + j] = T::one();
                for k in 0..sent.len() {
                    word_mask[(i * s + j) * w + k] = T::one();
                }
            }
            tokens.push(kept);
        }
        let mut words = BTreeMap::new();
        for (name, table) in &emb.word {
            let d = table.dim();
            let mut data = vec![T::zero(); b * s * w * d];
            for (i, post) in tokens.iter().enumerate() {
                for (j, sent) in post.iter().enumerate() {
                    for (k, tok) in sent.iter().enumerate() {
                        if let Some(v) = table.get(tok) {
                            let at = ((i * s + j) * w + k) * d;
                            for (dst, &src) in data[at..at + d].iter_mut().zip(v) {
                                *dst = T::of(src as f64);
                            }
                        }
                    }
                }
            }
            words.insert(name.clone(), Tensor::new(vec![b, s, w, d], data)?);
        }
        let mut sentences = BTreeMap::new();
        for (name, store) in &emb.sentence {
            let d = store.dim();
            let mut data = vec![T::zero(); b * s * d];
            for (i, e) in examples.iter().enumerate() {
                let v = store.get(&e.id).ok_or_else(|| Error::Coverage {
                    post_id: e.id.clone(),
                    what: format!("{name} sentence vectors"),
                })?;
                let count = v.len() / d;
                if count != e.sentences.len() {
                    return Err(Error::Coverage {
                        post_id: e.id.clone(),
                        what: format!(
                            "{name} vectors matching its {} sentences (file has {count})",
                            e.sentences.len()
                        ),
                    });
                }
                let keep = count.min(s);
                for (dst, &src) in data[i * s * d..(i * s + keep) * d]
                    .iter_mut()
                    .zip(&v[..keep * d])
                {
                    *dst = T::of(src as f64);
                }
            }
            sentences.insert(name.clone(), Tensor::new(vec![b, s, d], data)?);
        }
        Ok(PostBatch {
            ids: examples.iter().map(|e| e.id.clone()).collect(),
            tokens,
            words,
            sentences,
            word_mask: Tensor::new(vec![b, s, w], word_mask)?,
            sentence_mask: Tensor::new(vec![b, s], sentence_mask)?,
            labels: examples.iter().map(|e| e.labels.clone()).collect(),
        })
    }

    /// Pads to the longest post and sentence present, capped by `shape`.
    pub fn build(examples: &[&Example], emb: &Embeddings, shape: BatchShape) -> Result<Self> {
        let s = examples
            .iter()
            .map(|e| e.sentences.len())
            .max()
            .unwrap_or(0)
            .min(shape.max_sentences);
        let w = examples
            .iter()
            .flat_map(|e| e.sentences.iter().take(shape.max_sentences).map(Vec::len))
            .max()
            .unwrap_or(0)
            .min(shape.max_words);
        Self::build_padded(examples, emb, s.max(1), w.max(1))
    }
}

/// Index groups of at most `batch_size`; shuffled when a seed is given.
pub fn batch_indices(n: usize, batch_size: usize, seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

pub fn make_batches<T: Scalar>(
    examples: &[Example],
    emb: &Embeddings,
    shape: BatchShape,
    batch_size: usize,
    seed: Option<u64>,
) -> Result<Vec<PostBatch<T>>> {
    emb.check_coverage(examples)?;
    batch_indices(examples.len(), batch_size, seed)
        .iter()
        .map(|idx| {
            let group: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            PostBatch::build(&group, emb, shape)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str, sentences: &[&[&str]]) -> Example {
        Example {
            id: id.into(),
            sentences: sentences
                .iter()
                .map(|s| s.iter().map(|w| w.to_string()).collect())
                .collect(),
            labels: LabelSet::from([0]),
        }
    }

    fn emb() -> Embeddings {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", &[1.0, 2.0]).unwrap();
        let mut s = SentenceStore::new(1).unwrap();
        s.insert("p", vec![7.0, 8.0, 9.0]).unwrap();
        Embeddings {
            word: BTreeMap::from([("w".into(), t)]),
            sentence: BTreeMap::from([("s".into(), s)]),
        }
    }

    #[test]
    fn masks_and_values() {
        let e = example("p", &[&["a", "b"], &["c"], &["a"]]);
        let b = PostBatch::<f32>::build_padded(&[&e], &emb(), 8, 4).unwrap();
        assert_eq!(
            b.sentence_mask.data(),
            &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert_eq!(
            &b.word_mask.data()[..8],
            &[1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]
        );
        let w = &b.words["w"];
        assert_eq!(&w.data()[..4], &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(&b.sentences["s"].data()[..4], &[7.0, 8.0, 9.0, 0.0]);
    }

    #[test]
    fn truncation_keeps_head() {
        let e = example("p", &[&["a", "b", "c"], &["c"], &["a"]]);
        let b = PostBatch::<f32>::build(
            &[&e],
            &emb(),
            BatchShape {
                max_sentences: 2,
                max_words: 2,
            },
        )
        .unwrap();
        assert_eq!(b.dims(), (1, 2, 2));
        assert_eq!(b.tokens[0], vec![vec!["a", "b"], vec!["c"]]);
        assert_eq!(b.sentences["s"].data(), &[7.0, 8.0]);
    }

    #[test]
    fn coverage_errors_name_the_post() {
        let e = example("q", &[&["a"]]);
        let err = make_batches::<f32>(
            &[e],
            &emb(),
            BatchShape {
                max_sentences: 8,
                max_words: 35,
            },
            64,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Coverage { ref post_id, .. } if post_id == "q"));
        let e = example("p", &[&["a"]]);
        assert!(make_batches::<f32>(
            &[e],
            &emb(),
            BatchShape {
                max_sentences: 8,
                max_words: 35
            },
            64,
            None
        )
        .is_err());
    }

    #[test]
    fn batch_sizes() {
        let sizes: Vec<usize> = batch_indices(130, 64, Some(3))
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![64, 64, 2]);
        assert_eq!(
            batch_indices(130, 64, Some(3)),
            batch_indices(130, 64, Some(3))
        );
    }
}
