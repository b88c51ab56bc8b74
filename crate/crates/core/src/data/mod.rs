//! Datasets, label schema, text preprocessing, embedding files and batching.

mod batch;
mod dataset;
mod embeddings;
mod schema;
mod text;

pub use batch::{batch_indices, make_batches, BatchShape, Embeddings, PostBatch};
pub use dataset::{label_matrix, split_dataset, Dataset, Example, LabelSpace, Post, Split};
pub use embeddings::{EmbeddingFile, EmbeddingTable, SentenceStore};
pub use schema::{LabelSchema, CATEGORIES_23, MERGES};
pub use text::{preprocess, split_sentences, tokenize_post, MAX_SENTENCE_WORDS};
