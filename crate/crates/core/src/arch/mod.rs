//! Architecture expressions, the model they describe, and attention-based
//! explanations.

mod explain;
mod expr;
mod model;

pub use explain::{combine_word_scores, explain, top_k, PostExplanation, SentenceReport};
pub use expr::{ArchExpr, ArchItem, GroupKind, SourceCatalog};
pub use model::{AttentionTrace, Model, ModelConfig};
