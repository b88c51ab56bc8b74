//! Line-delimited dataset files.
//!
//! ```text
//! #schema=14
//! post-1<TAB>Body shaming;Other<TAB>free text of the post
//! ```
//!
//! Labels are category names from the fine (23) or merged (14) space as
//! declared by the header. Blank lines are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::schema::LabelSchema;
use super::text::tokenize_post;
use crate::error::{Error, Result};
use crate::labels::{LabelMatrix, LabelSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSpace {
    Fine,
    Merged,
}

impl LabelSpace {
    fn header(self) -> &'static str {
        match self {
            LabelSpace::Fine => "#schema=23",
            LabelSpace::Merged => "#schema=14",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Post {
    pub id: String,
    pub labels: Vec<String>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub space: LabelSpace,
    pub posts: Vec<Post>,
}

/// A post ready for batching: tokenized sentences and merged labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub sentences: Vec<Vec<String>>,
    pub labels: LabelSet,
}

impl Dataset {
    pub fn parse(text: &str) -> Result<Self> {
        let mut space = None;
        let mut posts = Vec::new();
        let mut seen = HashSet::new();
        let mut offset = 0;
        for raw in text.split_inclusive('\n') {
            let start = offset;
            offset += raw.len();
            let line = raw.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            if space.is_none() {
                space = Some(match line.trim() {
                    "#schema=23" => LabelSpace::Fine,
                    "#schema=14" => LabelSpace::Merged,
                    _ => {
                        return Err(Error::Parse {
                            offset: start,
                            message: "expected header #schema=23 or #schema=14".into(),
                        })
                    }
                });
                continue;
            }
            let fields: Vec<&str> = line.splitn(3, '\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    offset: start,
                    message: "expected id<TAB>labels<TAB>text".into(),
                });
            }
            let id = fields[0].trim();
            if id.is_empty() {
                return Err(Error::Parse {
                    offset: start,
                    message: "empty post id".into(),
                });
            }
            if !seen.insert(id.to_string()) {
                return Err(Error::Parse {
                    offset: start,
                    message: format!("duplicate post id {id:?}"),
                });
            }
            let labels: Vec<String> = fields[1]
                .split(';')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            if labels.is_empty() {
                return Err(Error::Parse {
                    offset: start + id.len() + 1,
                    message: format!("post {id:?} has no labels"),
                });
            }
            posts.push(Post {
                id: id.to_string(),
                labels,
                text: fields[2].to_string(),
            });
        }
        let space = space.ok_or_else(|| Error::Parse {
            offset: 0,
            message: "missing #schema header".into(),
        })?;
        Ok(Dataset { space, posts })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.space.header());
        for p in &self.posts {
            let _ = writeln!(out, "{}\t{}\t{}", p.id, p.labels.join(";"), p.text);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    /// Label indices in the merged space, one set per post.
    pub fn merged_labels(&self, schema: &LabelSchema) -> Result<Vec<LabelSet>> {
        self.posts
            .iter()
            .map(|p| {
                let mut set = LabelSet::new();
                for l in &p.labels {
                    let idx = match self.space {
                        LabelSpace::Fine => schema.fine_index(l).map(|i| schema.parent_of(i)),
                        LabelSpace::Merged => schema.merged_index(l),
                    };
                    let idx = idx.ok_or_else(|| {
                        Error::Schema(format!("post {:?}: unknown category {l:?}", p.id))
                    })?;
                    set.insert(idx);
                }
                Ok(set)
            })
            .collect()
    }

    /// Tokenizes every post and merges its labels.
    pub fn examples(&self, schema: &LabelSchema) -> Result<Vec<Example>> {
        let labels = self.merged_labels(schema)?;
        self.posts
            .iter()
            .zip(labels)
            .map(|(p, labels)| {
                let sentences =
                    tokenize_post(&p.text).map_err(|_| Error::EmptyPost(p.id.clone()))?;
                Ok(Example {
                    id: p.id.clone(),
                    sentences,
                    labels,
                })
            })
            .collect()
    }
}

pub fn label_matrix(examples: &[Example], num_labels: usize) -> Result<LabelMatrix> {
    LabelMatrix::new(
        num_labels,
        examples.iter().map(|e| e.labels.clone()).collect(),
    )
}

/// Row indices of a seeded 70/15/15 split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed`; test and validation each get
/// `floor(0.15 n)` rows, training gets the rest. With `merge_validation`
/// the validation rows are appended to training and the validation part is
/// left empty.
pub fn split_dataset(n: usize, seed: u64, merge_validation: bool) -> Result<Split> {
    if n < 10 {
        return Err(Error::Split(format!(
            "need at least 10 posts to split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = n * 15 / 100;
    let test = order[..held].to_vec();
    let validation = order[held..2 * held].to_vec();
    let mut train = order[2 * held..].to_vec();
    if merge_validation {
        train.extend_from_slice(&validation);
        return Ok(Split {
            train,
            validation: Vec::new(),
            test,
        });
    }
    Ok(Split {
        train,
        validation,
        test,
    })
}
