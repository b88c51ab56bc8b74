use std::collections::BTreeMap;

use log::info;
use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamConfig};
use crate::arch::{explain, ArchExpr, Model, ModelConfig, PostExplanation};
use crate::baselines::{lp_encode, PowersetMapping};
use crate::data::{batch_indices, label_matrix, BatchShape, Embeddings, Example, PostBatch};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::losses::{ebce_graph, ebce_weights, lp_ce_graph, nce_graph, nce_weights, LossKind};
use crate::metrics::MetricsReport;
use crate::predict::{argmax, predict_maxgap, predict_sigmoid};
use crate::scalar::Scalar;
use crate::tensor::Session;

/// Batch size used for inference.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 10,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
}

/// How output probabilities become label sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Decoder {
    /// Threshold each sigmoid output at 0.5.
    Sigmoid,
    /// Largest-gap cutoff on the softmax ranking.
    MaxGap,
    /// Arg-max over powerset classes, decoded to its label combination.
    Powerset(PowersetMapping),
}

impl Decoder {
    pub fn decode(&self, probs: &[f64]) -> Result<LabelSet> {
        match self {
            Decoder::Sigmoid => Ok(predict_sigmoid(probs)),
            Decoder::MaxGap => Ok(predict_maxgap(probs)),
            Decoder::Powerset(m) => m.decode(argmax(probs).unwrap_or(0)),
        }
    }
}

/// Mixes a base seed with indices (splitmix64 finalizer per step).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// A trained model together with its decoding rule.
#[derive(Clone, Debug)]
pub struct Classifier<T: Scalar> {
    pub model: Model<T>,
    pub decoder: Decoder,
    pub num_labels: usize,
    pub log: Vec<EpochLog>,
}

impl<T: Scalar> Classifier<T> {
    pub fn shape(&self) -> BatchShape {
        let c = self.model.config();
        BatchShape {
            max_sentences: c.max_sentences,
            max_words: c.max_words,
        }
    }

    fn batches(&self, examples: &[Example], emb: &Embeddings) -> Result<Vec<PostBatch<T>>> {
        emb.check_coverage(examples)?;
        batch_indices(examples.len(), EVAL_BATCH, None)
            .iter()
            .map(|idx| {
                let group: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
                PostBatch::build(&group, emb, self.shape())
            })
            .collect()
    }

    /// Output probabilities per post, in input order.
    pub fn predict_proba(&self, examples: &[Example], emb: &Embeddings) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(examples.len());
        for batch in self.batches(examples, emb)? {
            let probs = self.model.predict_proba(&batch)?;
            out.extend(
                probs
                    .rows()
                    .map(|r| r.iter().map(|v| v.f64()).collect::<Vec<f64>>()),
            );
        }
        Ok(out)
    }

    pub fn predict(&self, examples: &[Example], emb: &Embeddings) -> Result<Vec<LabelSet>> {
        self.predict_proba(examples, emb)?
            .iter()
            .map(|p| self.decoder.decode(p))
            .collect()
    }

    pub fn evaluate(
        &self,
        examples: &[Example],
        emb: &Embeddings,
        label_names: &[String],
    ) -> Result<MetricsReport> {
        if label_names.len() != self.num_labels {
            return Err(Error::Schema(format!(
                "model predicts {} labels, schema has {}",
                self.num_labels,
                label_names.len()
            )));
        }
        let pred = self.predict(examples, emb)?;
        let gold: Vec<LabelSet> = examples.iter().map(|e| e.labels.clone()).collect();
        MetricsReport::compute(&pred, &gold, label_names)
    }

    pub fn explain(
        &self,
        examples: &[Example],
        emb: &Embeddings,
        k: usize,
    ) -> Result<Vec<PostExplanation>> {
        if !self.model.arch().has_lstm_group() {
            return Err(Error::ExplainUnavailable(
                "the architecture has no wl group".into(),
            ));
        }
        let mut out = Vec::with_capacity(examples.len());
        for batch in self.batches(examples, emb)? {
            let (_, trace) = self.model.forward(&batch, false, 0)?;
            out.extend(explain(&trace, &batch, k)?);
        }
        Ok(out)
    }
}

/// Trains one model on `train`. Loss weights are computed once from the
/// whole training set; batch order and dropout derive from `config.seed`.
pub fn train_classifier<T: Scalar>(
    arch: &ArchExpr,
    config: &ModelConfig,
    options: &TrainOptions,
    train: &[Example],
    emb: &Embeddings,
    num_labels: usize,
) -> Result<Classifier<T>> {
    if train.is_empty() {
        return Err(Error::EmptyInput("no training posts".into()));
    }
    emb.check_coverage(train)?;
    let y = label_matrix(train, num_labels)?;
    y.require_nonempty_rows()?;
    let (outputs, decoder, classes) = match config.loss {
        LossKind::Ebce => (num_labels, Decoder::Sigmoid, Vec::new()),
        LossKind::Nce => (num_labels, Decoder::MaxGap, Vec::new()),
        LossKind::LpCe => {
            let (ids, mapping) = lp_encode(y.rows())?;
            (mapping.len(), Decoder::Powerset(mapping), ids)
        }
    };
    let ebce_w = if config.loss == LossKind::Ebce {
        Some(ebce_weights(&y)?)
    } else {
        None
    };
    let nce_w = if config.loss == LossKind::Nce {
        Some(nce_weights(&y)?)
    } else {
        None
    };

    let mut model = Model::<T>::build(arch, config, &emb.dims(), outputs)?;
    let mut adam = Adam::new(options.adam, model.params());
    let shape = BatchShape {
        max_sentences: config.max_sentences,
        max_words: config.max_words,
    };
    let mut log = Vec::with_capacity(options.epochs);
    for epoch in 0..options.epochs {
        let order = batch_indices(
            train.len(),
            options.batch_size,
            Some(derive_seed(config.seed, &[1, epoch as u64])),
        );
        let mut total = 0.0;
        for (bi, idx) in order.iter().enumerate() {
            let group: Vec<&Example> = idx.iter().map(|&i| &train[i]).collect();
            let batch = PostBatch::<T>::build(&group, emb, shape)?;
            let grads = {
                let mut s = Session::new(
                    model.params(),
                    true,
                    derive_seed(config.seed, &[2, epoch as u64, bi as u64]),
                );
                let (probs, _) = model.forward_graph(&mut s, &batch)?;
                let loss = match config.loss {
                    LossKind::Ebce => {
                        let yb = batch.label_matrix(num_labels)?;
                        ebce_graph(
                            &mut s.graph,
                            probs,
                            &yb,
                            ebce_w.as_ref().expect("ebce weights"),
                        )?
                    }
                    LossKind::Nce => {
                        let yb = batch.label_matrix(num_labels)?;
                        nce_graph(
                            &mut s.graph,
                            probs,
                            &yb,
                            nce_w.as_ref().expect("nce weights"),
                        )?
                    }
                    LossKind::LpCe => {
                        let targets: Vec<usize> = idx.iter().map(|&i| classes[i]).collect();
                        lp_ce_graph(&mut s.graph, probs, &targets)?
                    }
                };
                total += s.graph.value(loss).item()?.f64();
                s.param_grads(loss)?
            };
            adam.step(model.params_mut(), &grads)?;
        }
        let mean = total / order.len() as f64;
        info!("epoch {} loss {mean:.6}", epoch + 1);
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: mean,
        });
    }
    Ok(Classifier {
        model,
        decoder,
        num_labels,
        log,
    })
}

/// Per-run and averaged test metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    pub mean: crate::metrics::Summary,
    pub by_label_count: BTreeMap<usize, crate::metrics::Summary>,
}

impl RunSummary {
    pub fn from_runs(seeds: Vec<u64>, runs: Vec<MetricsReport>) -> Result<Self> {
        let summaries: Vec<_> = runs.iter().map(|r| r.summary).collect();
        let mean = crate::metrics::Summary::mean(&summaries)?;
        let mut groups: BTreeMap<usize, Vec<crate::metrics::Summary>> = BTreeMap::new();
        for r in &runs {
            for (k, g) in &r.by_label_count {
                groups.entry(*k).or_default().push(g.summary);
            }
        }
        let by_label_count = groups
            .into_iter()
            .map(|(k, v)| Ok((k, crate::metrics::Summary::mean(&v)?)))
            .collect::<Result<_>>()?;
        Ok(RunSummary {
            seeds,
            runs,
            mean,
            by_label_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_part() {
        assert_ne!(derive_seed(1, &[0]), derive_seed(1, &[1]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
        assert_eq!(derive_seed(5, &[1, 2]), derive_seed(5, &[1, 2]));
    }

    #[test]
    fn decoders() {
        assert_eq!(
            Decoder::Sigmoid.decode(&[0.6, 0.4]).unwrap(),
            LabelSet::from([0])
        );
        assert_eq!(
            Decoder::MaxGap.decode(&[0.1, 0.45, 0.45]).unwrap(),
            LabelSet::from([1, 2])
        );
        let (_, m) = lp_encode(&[LabelSet::from([3]), LabelSet::from([1, 2])]).unwrap();
        assert_eq!(
            Decoder::Powerset(m).decode(&[0.2, 0.8]).unwrap(),
            LabelSet::from([1, 2])
        );
    }
}
