//! Problem-transformation baselines: label powerset and binary relevance
//! over logistic regression, with TF-IDF or averaged-embedding features.

mod features;
mod logreg;
mod powerset;
mod runner;

pub use features::{
    avg_word_embedding, dense_to_sparse, tfidf_featurize, NgramMode, SparseRow, TfidfVocab,
    MAX_FEATURES,
};
pub use logreg::{
    br_train, logreg_train, logreg_train_traced, BinaryModel, BinaryRelevance, LogRegConfig,
    LogRegMode, LogisticRegression,
};
pub use powerset::{lp_decode, lp_encode, PowersetMapping};
pub use runner::{
    baseline_predict, example_text, run_baseline, BaselineConfig, FeatureKind, Transform,
};
