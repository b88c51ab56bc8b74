//! Keyword-generated corpora with random embeddings, for end-to-end checks.
//!
//! Each of the 14 merged labels owns a few keywords `kw{label}v{r}`; a post
//! mentions at least one keyword of every label it carries, and the rest of
//! its words are fillers `fw{n}`. Word vectors are uniform random; a
//! sentence vector is a fixed random projection of its mean word vector
//! plus noise.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    Dataset, EmbeddingTable, Embeddings, Example, LabelSchema, LabelSpace, Post, SentenceStore,
};
use crate::error::Result;
use crate::labels::LabelSet;

pub const WORD_SOURCE: &str = "w1";
pub const SENTENCE_SOURCE: &str = "s1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub posts: usize,
    pub keywords_per_label: usize,
    pub fillers: usize,
    pub word_dim: usize,
    pub sentence_dim: usize,
    /// Standard deviation-like scale of the uniform sentence noise.
    pub noise: f32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            posts: 2000,
            keywords_per_label: 2,
            fillers: 200,
            word_dim: 32,
            sentence_dim: 48,
            noise: 0.1,
            seed: 7,
        }
    }
}

pub fn keyword(label: usize, variant: usize) -> String {
    format!("kw{label}v{variant}")
}

pub fn filler(n: usize) -> String {
    format!("fw{n}")
}

/// Label index encoded in a keyword token.
pub fn keyword_label(token: &str) -> Option<usize> {
    token.strip_prefix("kw")?.split_once('v')?.0.parse().ok()
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub schema: LabelSchema,
    pub dataset: Dataset,
    pub examples: Vec<Example>,
    pub embeddings: Embeddings,
}

impl SyntheticCorpus {
    pub fn label_names(&self) -> Vec<String> {
        self.schema.merged().to_vec()
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    let schema = LabelSchema::standard();
    let names = schema.merged().to_vec();
    let num_labels = names.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut posts = Vec::with_capacity(spec.posts);
    for p in 0..spec.posts {
        let count = match rng.gen_range(0..10) {
            0..=5 => 1,
            6..=8 => 2,
            _ => 3,
        };
        let mut labels: Vec<usize> = (0..num_labels).collect();
        labels.shuffle(&mut rng);
        labels.truncate(count);
        labels.sort_unstable();

        let n_sent = rng.gen_range(1..=4);
        let mut sentences: Vec<Vec<String>> = (0..n_sent)
            .map(|_| {
                (0..rng.gen_range(4..=10))
                    .map(|_| filler(rng.gen_range(0..spec.fillers)))
                    .collect()
            })
            .collect();
        for &l in &labels {
            // sentences have at least 4 words, so a filler slot always exists
            loop {
                let s = rng.gen_range(0..n_sent);
                let at = rng.gen_range(0..sentences[s].len());
                if keyword_label(&sentences[s][at]).is_none() {
                    sentences[s][at] = keyword(l, rng.gen_range(0..spec.keywords_per_label));
                    break;
                }
            }
        }
        let text = sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join(". ")
            + ".";
        posts.push(Post {
            id: format!("syn{p}"),
            labels: labels.iter().map(|&l| names[l].clone()).collect(),
            text,
        });
    }
    let dataset = Dataset {
        space: LabelSpace::Merged,
        posts,
    };
    let examples = dataset.examples(&schema)?;

    let mut table = EmbeddingTable::new(spec.word_dim)?;
    let vocab = (0..num_labels)
        .flat_map(|l| (0..spec.keywords_per_label).map(move |r| keyword(l, r)))
        .chain((0..spec.fillers).map(filler));
    for token in vocab {
        table.insert(&token, &uniform_vec(&mut rng, spec.word_dim, 1.0))?;
    }
    let projection = uniform_vec(
        &mut rng,
        spec.sentence_dim * spec.word_dim,
        1.0 / (spec.word_dim as f32).sqrt(),
    );
    let mut store = SentenceStore::new(spec.sentence_dim)?;
    for e in &examples {
        let mut vectors = Vec::with_capacity(e.sentences.len() * spec.sentence_dim);
        for sent in &e.sentences {
            let mut mean = vec![0f32; spec.word_dim];
            for tok in sent {
                for (m, v) in mean
                    .iter_mut()
                    .zip(table.get(tok).expect("generated token"))
                {
                    *m += v / sent.len() as f32;
                }
            }
            for row in projection.chunks(spec.word_dim) {
                let dot: f32 = row.iter().zip(&mean).map(|(a, b)| a * b).sum();
                vectors.push(dot + rng.gen_range(-spec.noise..spec.noise));
            }
        }
        store.insert(&e.id, vectors)?;
    }
    let embeddings = Embeddings {
        word: BTreeMap::from([(WORD_SOURCE.to_string(), table)]),
        sentence: BTreeMap::from([(SENTENCE_SOURCE.to_string(), store)]),
    };
    Ok(SyntheticCorpus {
        schema,
        dataset,
        examples,
        embeddings,
    })
}

/// Gold labels implied by the keywords of a tokenized post.
pub fn keyword_labels(example: &Example) -> LabelSet {
    example
        .sentences
        .iter()
        .flatten()
        .filter_map(|t| keyword_label(t))
        .collect()
}
