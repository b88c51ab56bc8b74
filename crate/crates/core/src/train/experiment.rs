use log::info;
use rayon::prelude::*;

use super::artifact::ModelArtifact;
use super::config::RunConfig;
use super::runner::{train_classifier, RunSummary, TrainOptions};
use crate::arch::{ArchExpr, SourceCatalog};
use crate::data::{split_dataset, Embeddings, Example, LabelSchema};
use crate::error::{Error, Result};
use crate::ling::{build_ling_source, vocabulary, LexiconSet, LingFeaturizer, LING_SOURCE};

/// Everything a run reads: tokenized posts, embeddings and lexicons.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub schema: LabelSchema,
    pub examples: Vec<Example>,
    pub embeddings: Embeddings,
    pub lexicons: Option<LexiconSet>,
}

impl Corpus {
    /// Sources available to architecture expressions.
    pub fn catalog(&self) -> SourceCatalog {
        let mut cat = SourceCatalog::empty();
        for id in self.embeddings.word.keys() {
            cat.add_word(id);
        }
        if self.lexicons.is_some() {
            cat.add_word(LING_SOURCE);
        }
        for id in self.embeddings.sentence.keys() {
            cat.add_sentence(id);
        }
        cat
    }

    pub fn label_names(&self) -> Vec<String> {
        self.schema.merged().to_vec()
    }
}

/// Keeps only the sources `arch` reads, adding linguistic features over
/// `examples` when requested.
pub fn select_sources(
    arch: &ArchExpr,
    emb: &Embeddings,
    ling: Option<&LingFeaturizer>,
    examples: &[Example],
) -> Result<Embeddings> {
    let mut out = Embeddings::default();
    for id in arch.word_sources() {
        if id == LING_SOURCE && !emb.word.contains_key(id) {
            let f = ling.ok_or_else(|| {
                Error::Config("the architecture uses ling but no lexicons were given".into())
            })?;
            out.word
                .insert(id.to_string(), build_ling_source(&vocabulary(examples), f)?);
            continue;
        }
        let table = emb
            .word
            .get(id)
            .ok_or_else(|| Error::Config(format!("no word embeddings for source {id}")))?;
        out.word.insert(id.to_string(), table.clone());
    }
    for id in arch.sentence_sources() {
        let store = emb
            .sentence
            .get(id)
            .ok_or_else(|| Error::Config(format!("no sentence embeddings for source {id}")))?;
        out.sentence.insert(id.to_string(), store.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub artifacts: Vec<ModelArtifact>,
    pub summary: RunSummary,
}

/// Trains `cfg.runs` models on the training split and scores each on the
/// test split. All runs share one split, drawn with the base seed.
pub fn run_experiment(cfg: &RunConfig, corpus: &Corpus) -> Result<RunOutput> {
    let arch = ArchExpr::parse(&cfg.arch, &corpus.catalog())?;
    let mut cfg = cfg.clone();
    if cfg.apply_preset(&arch.to_string()) {
        info!("using tuned dimensions for {arch}");
    }
    cfg.validate()?;

    let split = split_dataset(corpus.examples.len(), cfg.model.seed, cfg.merge_validation)?;
    let pick = |idx: &[usize]| {
        idx.iter()
            .map(|&i| corpus.examples[i].clone())
            .collect::<Vec<_>>()
    };
    let (train, test) = (pick(&split.train), pick(&split.test));

    let ling = if arch.word_sources().contains(&LING_SOURCE) {
        corpus
            .lexicons
            .as_ref()
            .map(|lex| lex.fit(vocabulary(&train).iter().map(String::as_str)))
    } else {
        None
    };
    let emb = select_sources(&arch, &corpus.embeddings, ling.as_ref(), &corpus.examples)?;
    emb.check_coverage(&corpus.examples)?;

    let labels = corpus.label_names();
    let options = TrainOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
    };
    let seeds = cfg.run_seeds();
    let results: Vec<Result<(ModelArtifact, crate::metrics::MetricsReport)>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut model_cfg = cfg.model.clone();
            model_cfg.seed = seed;
            let c =
                train_classifier::<f32>(&arch, &model_cfg, &options, &train, &emb, labels.len())?;
            let report = c.evaluate(&test, &emb, &labels)?;
            info!("run seed {seed}: F_I {:.4}", report.summary.f_i);
            let artifact = ModelArtifact::from_classifier(
                &c,
                labels.clone(),
                corpus.schema.render(),
                ling.as_ref().map(|f| f.means().to_vec()),
            );
            Ok((artifact, report))
        })
        .collect();
    let mut artifacts = Vec::with_capacity(results.len());
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (a, m) = r?;
        artifacts.push(a);
        reports.push(m);
    }
    Ok(RunOutput {
        artifacts,
        summary: RunSummary::from_runs(seeds, reports)?,
    })
}

/// Rebuilds the embeddings a saved model needs for `examples`.
pub fn artifact_embeddings(
    artifact: &ModelArtifact,
    emb: &Embeddings,
    lexicons: Option<&LexiconSet>,
    examples: &[Example],
) -> Result<Embeddings> {
    let arch = ArchExpr::parse(&artifact.arch, &artifact.catalog())?;
    let ling = match (&artifact.ling_means, lexicons) {
        (Some(means), Some(lex)) => Some(LingFeaturizer::with_means(lex.clone(), means.clone())?),
        _ => None,
    };
    let out = select_sources(&arch, emb, ling.as_ref(), examples)?;
    for (id, &dim) in &artifact.dims {
        let actual = out.dims().get(id).copied();
        if actual != Some(dim) {
            return Err(Error::Config(format!(
                "source {id} has width {actual:?}, the model expects {dim}"
            )));
        }
    }
    Ok(out)
}
