//! Optimization, run configuration, training loops and saved models.

mod artifact;
mod config;
mod experiment;
mod optim;
mod runner;

pub use artifact::{ModelArtifact, StoredParam, ARTIFACT_FORMAT, ARTIFACT_VERSION};
pub use config::{preset_for, RunConfig, PRESETS};
pub use experiment::{artifact_embeddings, run_experiment, select_sources, Corpus, RunOutput};
pub use optim::{Adam, AdamConfig};
pub use runner::{
    derive_seed, train_classifier, Classifier, Decoder, EpochLog, RunSummary, TrainOptions,
    EVAL_BATCH,
};
