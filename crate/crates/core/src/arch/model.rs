use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::expr::{ArchExpr, ArchItem, GroupKind};
use crate::data::PostBatch;
use crate::error::{Error, Result};
use crate::layers::{Attention, BiLstm, ConvBlock, Dense};
use crate::losses::LossKind;
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Session, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden size per direction of every biLSTM.
    pub lstm_dim: usize,
    pub attn_dim: usize,
    pub filters_per_kernel: usize,
    /// Sentences kept per post (|S|).
    pub max_sentences: usize,
    /// Words kept per sentence (|W|), at most 35.
    pub max_words: usize,
    pub dropout: f64,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lstm_dim: 300,
            attn_dim: 600,
            filters_per_kernel: 100,
            max_sentences: 8,
            max_words: crate::data::MAX_SENTENCE_WORDS,
            dropout: 0.25,
            loss: LossKind::Ebce,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lstm_dim", self.lstm_dim),
            ("attn_dim", self.attn_dim),
            ("filters_per_kernel", self.filters_per_kernel),
            ("max_sentences", self.max_sentences),
            ("max_words", self.max_words),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_words > crate::data::MAX_SENTENCE_WORDS {
            return Err(Error::Config(format!(
                "max_words {} exceeds the sentence limit {}",
                self.max_words,
                crate::data::MAX_SENTENCE_WORDS
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} must be in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Encoder {
    Lstm(BiLstm, Attention),
    Conv(ConvBlock),
}

#[derive(Clone, Debug)]
enum Part {
    Group {
        sources: Vec<String>,
        input_width: usize,
        encoder: Encoder,
    },
    Sentence {
        source: String,
        width: usize,
    },
}

impl Part {
    fn output_width(&self) -> usize {
        match self {
            Part::Group {
                encoder: Encoder::Lstm(l, _),
                ..
            } => l.output_size(),
            Part::Group {
                encoder: Encoder::Conv(c),
                ..
            } => c.output_size(),
            Part::Sentence { width, .. } => *width,
        }
    }
}

/// Attention weights from one forward pass.
#[derive(Clone, Debug)]
pub struct AttentionTrace<T> {
    /// One `[B, S, W]` tensor per wl group, in expression order.
    pub word: Vec<Tensor<T>>,
    /// `[B, S]`.
    pub sentence: Tensor<T>,
}

/// The two-level network for one architecture expression.
#[derive(Clone, Debug)]
pub struct Model<T: Scalar> {
    arch: ArchExpr,
    config: ModelConfig,
    dims: BTreeMap<String, usize>,
    outputs: usize,
    params: ParamStore<T>,
    parts: Vec<Part>,
    sentence_width: usize,
    post_lstm: BiLstm,
    post_attention: Attention,
    head: Dense,
}

impl<T: Scalar> Model<T> {
    /// `dims` gives the width of every source the expression uses;
    /// `outputs` is the number of labels (or powerset classes).
    pub fn build(
        arch: &ArchExpr,
        config: &ModelConfig,
        dims: &BTreeMap<String, usize>,
        outputs: usize,
    ) -> Result<Self> {
        config.validate()?;
        if outputs == 0 {
            return Err(Error::Config("model needs at least one output".into()));
        }
        let width = |src: &str| -> Result<usize> {
            match dims.get(src) {
                Some(&0) => Err(Error::Config(format!("source {src:?} has zero width"))),
                Some(&d) => Ok(d),
                None => Err(Error::Config(format!(
                    "no embedding dimension known for source {src:?}"
                ))),
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let mut parts = Vec::new();
        for (gi, item) in arch.items.iter().enumerate() {
            match item {
                ArchItem::Group { kind, sources } => {
                    let input_width = sources.iter().map(|s| width(s)).sum::<Result<usize>>()?;
                    if input_width == 0 {
                        return Err(Error::Config(format!(
                            "group {gi} concatenates to zero width"
                        )));
                    }
                    let name = format!("{}{gi}", kind.keyword());
                    let encoder = match kind {
                        GroupKind::Lstm => {
                            let lstm = BiLstm::new(
                                &mut params,
                                &format!("{name}.lstm"),
                                input_width,
                                config.lstm_dim,
                                &mut rng,
                            );
                            let attn = Attention::new(
                                &mut params,
                                &format!("{name}.attention"),
                                lstm.output_size(),
                                config.attn_dim,
                                &mut rng,
                            );
                            Encoder::Lstm(lstm, attn)
                        }
                        GroupKind::Conv => Encoder::Conv(ConvBlock::new(
                            &mut params,
                            &format!("{name}.conv"),
                            input_width,
                            config.filters_per_kernel,
                            &mut rng,
                        )),
                    };
                    parts.push(Part::Group {
                        sources: sources.clone(),
                        input_width,
                        encoder,
                    });
                }
                ArchItem::Sentence(source) => parts.push(Part::Sentence {
                    source: source.clone(),
                    width: width(source)?,
                }),
            }
        }
        let sentence_width: usize = parts.iter().map(Part::output_width).sum();
        if sentence_width == 0 {
            return Err(Error::Config(
                "sentence-level concatenation has zero width".into(),
            ));
        }
        let post_lstm = BiLstm::new(
            &mut params,
            "post.lstm",
            sentence_width,
            config.lstm_dim,
            &mut rng,
        );
        let post_attention = Attention::new(
            &mut params,
            "post.attention",
            post_lstm.output_size(),
            config.attn_dim,
            &mut rng,
        );
        let head = Dense::new(
            &mut params,
            "head",
            post_lstm.output_size(),
            outputs,
            &mut rng,
        );
        Ok(Model {
            arch: arch.clone(),
            config: config.clone(),
            dims: dims.clone(),
            outputs,
            params,
            parts,
            sentence_width,
            post_lstm,
            post_attention,
            head,
        })
    }

    pub fn arch(&self) -> &ArchExpr {
        &self.arch
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn dims(&self) -> &BTreeMap<String, usize> {
        &self.dims
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Width of each group's sentence vectors, in expression order (`D_i^w`
    /// for the inputs is in [`Model::group_input_widths`]).
    pub fn part_widths(&self) -> Vec<usize> {
        self.parts.iter().map(Part::output_width).collect()
    }

    pub fn group_input_widths(&self) -> Vec<usize> {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Group { input_width, .. } => Some(*input_width),
                Part::Sentence { .. } => None,
            })
            .collect()
    }

    /// `D^s`, the width of the sentence-level concatenation.
    pub fn sentence_width(&self) -> usize {
        self.sentence_width
    }

    /// Same model at another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            config: self.config.clone(),
            dims: self.dims.clone(),
            outputs: self.outputs,
            params: self.params.cast(),
            parts: self.parts.clone(),
            sentence_width: self.sentence_width,
            post_lstm: self.post_lstm.clone(),
            post_attention: self.post_attention.clone(),
            head: self.head.clone(),
        }
    }

    fn source_input(
        &self,
        s: &mut Session<'_, T>,
        cache: &mut BTreeMap<String, Var>,
        source: &str,
        tensor: Option<&Tensor<T>>,
        lead: &[usize],
    ) -> Result<Var> {
        if let Some(&v) = cache.get(source) {
            return Ok(v);
        }
        let t = tensor
            .ok_or_else(|| Error::dim(format!("batch has no tensor for source {source:?}")))?;
        let want = self.dims[source];
        let mut expected = lead.to_vec();
        expected.push(want);
        if t.shape() != expected.as_slice() {
            return Err(Error::dim(format!(
                "source {source:?} tensor is {:?}, expected {expected:?}",
                t.shape()
            )));
        }
        let v = s.constant(t.clone());
        let v = s.dropout(v, self.config.dropout)?;
        cache.insert(source.to_string(), v);
        Ok(v)
    }

    /// Builds the forward pass on `s`; returns class probabilities `[B, L]`
    /// and the attention weights.
    pub fn forward_graph(
        &self,
        s: &mut Session<'_, T>,
        batch: &PostBatch<T>,
    ) -> Result<(Var, AttentionTrace<T>)> {
        let (b, smax, wmax) = batch.dims();
        if batch.sentence_mask.shape() != [b, smax] {
            return Err(Error::dim(format!(
                "sentence mask {:?} does not match word mask {:?}",
                batch.sentence_mask.shape(),
                batch.word_mask.shape()
            )));
        }
        let flat_mask = batch.word_mask.clone().reshape(vec![b * smax, wmax])?;
        let mut cache = BTreeMap::new();
        let mut columns = Vec::with_capacity(self.parts.len());
        let mut word_trace = Vec::new();
        for part in &self.parts {
            match part {
                Part::Group {
                    sources,
                    input_width,
                    encoder,
                } => {
                    let mut inputs = Vec::with_capacity(sources.len());
                    for src in sources {
                        inputs.push(self.source_input(
                            s,
                            &mut cache,
                            src,
                            batch.words.get(src),
                            &[b, smax, wmax],
                        )?);
                    }
                    let x = if inputs.len() == 1 {
                        inputs[0]
                    } else {
                        s.graph.concat_last(&inputs)?
                    };
                    debug_assert_eq!(s.graph.shape(x)[3], *input_width);
                    let x = s.graph.reshape(x, vec![b * smax, wmax, *input_width])?;
                    let vecs = match encoder {
                        Encoder::Lstm(lstm, attn) => {
                            let states = lstm.forward_batch(s, x, &flat_mask)?;
                            let (vecs, weights) = attn.forward_batch(s, states, &flat_mask)?;
                            word_trace.push(
                                s.graph
                                    .value(weights)
                                    .clone()
                                    .reshape(vec![b, smax, wmax])?,
                            );
                            vecs
                        }
                        Encoder::Conv(conv) => conv.forward_batch(s, x, &flat_mask)?,
                    };
                    columns.push(s.graph.reshape(vecs, vec![b, smax, part.output_width()])?);
                }
                Part::Sentence { source, .. } => {
                    columns.push(self.source_input(
                        s,
                        &mut cache,
                        source,
                        batch.sentences.get(source),
                        &[b, smax],
                    )?);
                }
            }
        }
        let sentences = if columns.len() == 1 {
            columns[0]
        } else {
            s.graph.concat_last(&columns)?
        };
        if s.graph.shape(sentences) != [b, smax, self.sentence_width] {
            return Err(Error::dim(format!(
                "sentence representation {:?}, expected width {}",
                s.graph.shape(sentences),
                self.sentence_width
            )));
        }
        let states = self
            .post_lstm
            .forward_batch(s, sentences, &batch.sentence_mask)?;
        let (post, sentence_weights) =
            self.post_attention
                .forward_batch(s, states, &batch.sentence_mask)?;
        let post = s.dropout(post, self.config.dropout)?;
        let logits = self.head.forward(s, post)?;
        let probs = if self.config.loss.uses_softmax() {
            s.graph
                .softmax_rows(logits, &Tensor::ones(vec![b, self.outputs]))?
        } else {
            s.graph.sigmoid(logits)
        };
        let trace = AttentionTrace {
            word: word_trace,
            sentence: s.graph.value(sentence_weights).clone(),
        };
        Ok((probs, trace))
    }

    /// Runs a fresh session; with `train` set, dropout is drawn from `seed`.
    pub fn forward(
        &self,
        batch: &PostBatch<T>,
        train: bool,
        seed: u64,
    ) -> Result<(Tensor<T>, AttentionTrace<T>)> {
        let mut s = Session::new(&self.params, train, seed);
        let (probs, trace) = self.forward_graph(&mut s, batch)?;
        Ok((s.graph.value(probs).clone(), trace))
    }

    /// Inference probabilities `[B, L]`.
    pub fn predict_proba(&self, batch: &PostBatch<T>) -> Result<Tensor<T>> {
        Ok(self.forward(batch, false, 0)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::SourceCatalog;

    fn dims(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn width_bookkeeping() {
        let cat = SourceCatalog::default();
        let cfg = ModelConfig {
            lstm_dim: 3,
            attn_dim: 2,
            filters_per_kernel: 4,
            ..ModelConfig::default()
        };
        let arch = ArchExpr::parse("s(wl(elmo, glove), wc(glove), tbert)", &cat).unwrap();
        let m = Model::<f32>::build(
            &arch,
            &cfg,
            &dims(&[("elmo", 5), ("glove", 2), ("tbert", 7)]),
            14,
        )
        .unwrap();
        assert_eq!(m.group_input_widths(), vec![7, 2]);
        assert_eq!(m.part_widths(), vec![6, 12, 7]);
        assert_eq!(m.sentence_width(), 25);
    }

    #[test]
    fn missing_or_zero_dims() {
        let cat = SourceCatalog::default();
        let arch = ArchExpr::parse("s(wl(elmo), tbert)", &cat).unwrap();
        let cfg = ModelConfig {
            lstm_dim: 2,
            attn_dim: 2,
            ..ModelConfig::default()
        };
        assert!(matches!(
            Model::<f32>::build(&arch, &cfg, &dims(&[("elmo", 3)]), 2),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Model::<f32>::build(&arch, &cfg, &dims(&[("elmo", 0), ("tbert", 1)]), 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig {
            max_words: 36,
            ..ModelConfig::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        }
        .validate()
        .is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
