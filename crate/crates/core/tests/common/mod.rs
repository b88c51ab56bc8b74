//! Shared harness for the gradient and acceptance targets.
#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlcat::arch::{ArchExpr, Model, ModelConfig, SourceCatalog};
use mlcat::data::{EmbeddingTable, Embeddings, Example, PostBatch, SentenceStore};
use mlcat::labels::{LabelMatrix, LabelSet};
use mlcat::layers::{Attention, BiLstm, ConvBlock, Dense};
use mlcat::losses::{
    ebce_graph, ebce_weights, lp_ce_graph, nce_graph, nce_weights, EbceWeights, LossKind,
    NceWeights,
};
use mlcat::synthetic::{generate, SyntheticSpec};
use mlcat::tensor::gradcheck::{check_params, CheckOptions, Objective};
use mlcat::tensor::{ParamId, ParamStore};
use mlcat::train::{Corpus, RunConfig};
use mlcat::{Result, Scalar, Session, Tensor, Var};

pub const GRAD_TOLERANCE: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

/// `[N, T]` mask with random valid prefixes; `min_len` keeps rows nonempty.
pub fn prefix_mask(rng: &mut ChaCha8Rng, n: usize, t: usize, min_len: usize) -> Tensor<f64> {
    let mut data = vec![0.0; n * t];
    for row in 0..n {
        let len = rng.gen_range(min_len..=t);
        data[row * t..row * t + len].fill(1.0);
    }
    Tensor::from_f64(vec![n, t], &data).unwrap()
}

/// `sum(out * P)` with a fixed pseudo-random `P`, so every output entry
/// reaches the loss with a distinct weight.
fn project<T: Scalar>(s: &mut Session<'_, T>, out: Var, seed: u64) -> Result<Var> {
    let shape = s.graph.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut r = rng(seed);
    let p: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let weighted = s.graph.mul_const(out, Tensor::from_f64(shape, &p)?)?;
    Ok(s.graph.sum(weighted))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Matmul,
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Exp,
    Log,
    Softmax,
    SoftmaxRows,
    Conv1d,
    MaxOverTime,
    Concat,
    Slice,
    Stack,
    Select,
    SumAxis,
}

pub const OPS: [OpKind; 16] = [
    OpKind::Matmul,
    OpKind::Add,
    OpKind::Mul,
    OpKind::Tanh,
    OpKind::Sigmoid,
    OpKind::Exp,
    OpKind::Log,
    OpKind::Softmax,
    OpKind::SoftmaxRows,
    OpKind::Conv1d,
    OpKind::MaxOverTime,
    OpKind::Concat,
    OpKind::Slice,
    OpKind::Stack,
    OpKind::Select,
    OpKind::SumAxis,
];

struct OpCase {
    kind: OpKind,
    a: Option<ParamId>,
    b: Option<ParamId>,
    mask: Option<Tensor<f64>>,
    arg: usize,
    index: usize,
    seed: u64,
}

impl Objective for OpCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let a = s.param(self.a.unwrap());
        let b = self.b.map(|b| s.param(b));
        let mask = self.mask.as_ref().map(Tensor::cast::<T>);
        let g = &mut s.graph;
        let out = match self.kind {
            OpKind::Matmul => g.matmul(a, b.unwrap())?,
            OpKind::Add => g.add(a, b.unwrap())?,
            OpKind::Mul => g.mul(a, b.unwrap())?,
            OpKind::Tanh => g.tanh(a),
            OpKind::Sigmoid => g.sigmoid(a),
            OpKind::Exp => g.exp(a),
            OpKind::Log => g.log(a),
            OpKind::Softmax => g.softmax(a, mask.as_ref())?,
            OpKind::SoftmaxRows => g.softmax_rows(a, mask.as_ref().unwrap())?,
            OpKind::Conv1d => g.conv1d(a, b.unwrap(), None, mask.as_ref())?,
            OpKind::MaxOverTime => g.max_over_time(a)?,
            OpKind::Concat => g.concat(&[a, b.unwrap()], self.arg)?,
            OpKind::Slice => {
                let len = g.shape(a)[0] - self.arg;
                g.slice(a, 0, self.arg, len)?
            }
            OpKind::Stack => g.stack(&[a, b.unwrap()], self.arg)?,
            OpKind::Select => g.select(a, self.arg, self.index)?,
            OpKind::SumAxis => g.sum_axis(a, self.arg)?,
        };
        // a conv window over masked positions is -inf; drop those before projecting
        let out = if self.kind == OpKind::Conv1d {
            s.graph.max_over_time(out)?
        } else {
            out
        };
        project(s, out, self.seed)
    }
}

fn op_case(kind: OpKind, r: &mut ChaCha8Rng, seed: u64) -> (ParamStore<f64>, OpCase) {
    let mut store = ParamStore::new();
    let (m, n, k) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
    let mut case = OpCase {
        kind,
        a: None,
        b: None,
        mask: None,
        arg: 0,
        index: 0,
        seed,
    };
    match kind {
        OpKind::Matmul => {
            case.a = Some(store.add("a", uniform(r, vec![m, k], -1.0, 1.0)));
            case.b = Some(store.add("b", uniform(r, vec![k, n], -1.0, 1.0)));
        }
        OpKind::Add | OpKind::Mul => {
            case.a = Some(store.add("a", uniform(r, vec![m, n], -1.0, 1.0)));
            // half the cases broadcast a bias row
            let bshape = if r.gen_bool(0.5) { vec![n] } else { vec![m, n] };
            case.b = Some(store.add("b", uniform(r, bshape, -1.0, 1.0)));
        }
        OpKind::Tanh | OpKind::Sigmoid | OpKind::Exp => {
            case.a = Some(store.add("a", uniform(r, vec![m, n, k], -2.0, 2.0)));
        }
        OpKind::Log => case.a = Some(store.add("a", uniform(r, vec![m, n], 0.5, 2.0))),
        OpKind::Softmax => {
            let t = n + 1;
            case.a = Some(store.add("a", uniform(r, vec![m, t], -2.0, 2.0)));
            case.mask = Some(prefix_mask(r, m, t, 1));
        }
        OpKind::SoftmaxRows => {
            let t = n + 1;
            case.a = Some(store.add("a", uniform(r, vec![m, t], -2.0, 2.0)));
            case.mask = Some(prefix_mask(r, m, t, 0));
        }
        OpKind::Conv1d => {
            let width = r.gen_range(1..4);
            let w = width + r.gen_range(0..4);
            case.a = Some(store.add("x", uniform(r, vec![m, w, k], -1.0, 1.0)));
            case.b = Some(store.add("filters", uniform(r, vec![width, k, n], -1.0, 1.0)));
            // every row keeps at least one full window
            let mut data = vec![0.0; m * w];
            for row in 0..m {
                let len = r.gen_range(width..=w);
                data[row * w..row * w + len].fill(1.0);
            }
            case.mask = Some(Tensor::from_f64(vec![m, w], &data).unwrap());
        }
        OpKind::MaxOverTime => {
            case.a = Some(store.add("a", uniform(r, vec![m, n + 1, k], -1.0, 1.0)))
        }
        OpKind::Concat => {
            case.arg = r.gen_range(0..2);
            let other = if case.arg == 0 {
                vec![k, n]
            } else {
                vec![m, k]
            };
            case.a = Some(store.add("a", uniform(r, vec![m, n], -1.0, 1.0)));
            case.b = Some(store.add("b", uniform(r, other, -1.0, 1.0)));
        }
        OpKind::Slice => {
            case.a = Some(store.add("a", uniform(r, vec![m + 1, n], -1.0, 1.0)));
            case.arg = r.gen_range(0..=m);
        }
        OpKind::Stack => {
            case.arg = r.gen_range(0..3);
            case.a = Some(store.add("a", uniform(r, vec![m, n], -1.0, 1.0)));
            case.b = Some(store.add("b", uniform(r, vec![m, n], -1.0, 1.0)));
        }
        OpKind::Select => {
            case.arg = r.gen_range(0..3);
            case.index = r.gen_range(0..[m, n, k][case.arg]);
            case.a = Some(store.add("a", uniform(r, vec![m, n, k], -1.0, 1.0)));
        }
        OpKind::SumAxis => {
            case.arg = r.gen_range(0..3);
            case.a = Some(store.add("a", uniform(r, vec![m, n, k], -1.0, 1.0)));
        }
    }
    (store, case)
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: String,
    pub shapes: usize,
    pub worst: f64,
    pub detail: String,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst <= GRAD_TOLERANCE
    }
}

fn run_cases<O: Objective>(
    name: &str,
    shapes: usize,
    seed: u64,
    opts: &CheckOptions,
    mut make: impl FnMut(&mut ChaCha8Rng, u64) -> (ParamStore<f64>, O),
) -> CaseResult {
    let mut r = rng(seed);
    let mut result = CaseResult {
        name: name.to_string(),
        shapes,
        worst: 0.0,
        detail: String::new(),
    };
    for i in 0..shapes {
        let (store, obj) = make(&mut r, seed.wrapping_mul(1000) + i as u64);
        match check_params(&store, &obj, opts) {
            Ok(rep) if rep.max_rel_err.is_finite() => {
                if rep.max_rel_err >= result.worst {
                    result.worst = rep.max_rel_err;
                    result.detail = format!(
                        "case {i}: {}[{}] analytic {:.6e} numeric {:.6e}",
                        rep.worst_param, rep.worst_index, rep.analytic, rep.numeric
                    );
                }
            }
            Ok(rep) => {
                result.worst = f64::INFINITY;
                result.detail = format!("case {i}: non-finite error at {}", rep.worst_param);
            }
            Err(e) => {
                result.worst = f64::INFINITY;
                result.detail = format!("case {i}: {e}");
            }
        }
    }
    result
}

pub fn op_results(shapes: usize) -> Vec<CaseResult> {
    OPS.iter()
        .enumerate()
        .map(|(i, &kind)| {
            run_cases(
                &format!("op {kind:?}"),
                shapes,
                100 + i as u64,
                &CheckOptions::default(),
                |r, seed| op_case(kind, r, seed),
            )
        })
        .collect()
}

struct LstmCase {
    lstm: BiLstm,
    x: ParamId,
    mask: Tensor<f64>,
    seed: u64,
}

impl Objective for LstmCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let x = s.param(self.x);
        let out = self.lstm.forward_batch(s, x, &self.mask.cast())?;
        project(s, out, self.seed)
    }
}

struct AttentionCase {
    attn: Attention,
    x: ParamId,
    mask: Tensor<f64>,
    seed: u64,
}

impl Objective for AttentionCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let x = s.param(self.x);
        let (vecs, weights) = self.attn.forward_batch(s, x, &self.mask.cast())?;
        let a = project(s, vecs, self.seed)?;
        let b = project(s, weights, self.seed + 1)?;
        s.graph.add(a, b)
    }
}

struct ConvCase {
    conv: ConvBlock,
    x: ParamId,
    mask: Tensor<f64>,
    seed: u64,
}

impl Objective for ConvCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let x = s.param(self.x);
        let out = self.conv.forward_batch(s, x, &self.mask.cast())?;
        project(s, out, self.seed)
    }
}

struct DenseCase {
    dense: Dense,
    x: ParamId,
    seed: u64,
}

impl Objective for DenseCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let x = s.param(self.x);
        let out = self.dense.forward(s, x)?;
        project(s, out, self.seed)
    }
}

pub fn layer_results(shapes: usize) -> Vec<CaseResult> {
    let opts = CheckOptions::default();
    vec![
        run_cases("layer bilstm", shapes, 200, &opts, |r, seed| {
            let mut store = ParamStore::new();
            let (n, t, d, h) = (
                r.gen_range(1..4),
                r.gen_range(1..5),
                r.gen_range(1..4),
                r.gen_range(1..4),
            );
            let lstm = BiLstm::new(&mut store, "lstm", d, h, r);
            let x = store.add("x", uniform(r, vec![n, t, d], -1.0, 1.0));
            let mask = prefix_mask(r, n, t, 0);
            (
                store,
                LstmCase {
                    lstm,
                    x,
                    mask,
                    seed,
                },
            )
        }),
        run_cases("layer attention", shapes, 201, &opts, |r, seed| {
            let mut store = ParamStore::new();
            let (n, t, h, a) = (
                r.gen_range(1..4),
                r.gen_range(1..5),
                r.gen_range(1..5),
                r.gen_range(1..5),
            );
            let attn = Attention::new(&mut store, "attn", h, a, r);
            let x = store.add("x", uniform(r, vec![n, t, h], -1.0, 1.0));
            let mask = prefix_mask(r, n, t, 0);
            (
                store,
                AttentionCase {
                    attn,
                    x,
                    mask,
                    seed,
                },
            )
        }),
        run_cases("layer conv", shapes, 202, &opts, |r, seed| {
            let mut store = ParamStore::new();
            let (n, w, d, f) = (
                r.gen_range(1..4),
                r.gen_range(1..7),
                r.gen_range(1..4),
                r.gen_range(1..3),
            );
            let conv = ConvBlock::new(&mut store, "conv", d, f, r);
            let x = store.add("x", uniform(r, vec![n, w, d], -1.0, 1.0));
            let mask = prefix_mask(r, n, w, 0);
            (
                store,
                ConvCase {
                    conv,
                    x,
                    mask,
                    seed,
                },
            )
        }),
        run_cases("layer dense", shapes, 203, &opts, |r, seed| {
            let mut store = ParamStore::new();
            let (n, i, o) = (r.gen_range(1..5), r.gen_range(1..6), r.gen_range(1..6));
            let dense = Dense::new(&mut store, "dense", i, o, r);
            let x = store.add("x", uniform(r, vec![n, i], -1.0, 1.0));
            (store, DenseCase { dense, x, seed })
        }),
    ]
}

pub fn random_labels(r: &mut ChaCha8Rng, n: usize, l: usize, nonempty: bool) -> LabelMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut set: LabelSet = (0..l).filter(|_| r.gen_bool(0.3)).collect();
            if nonempty && set.is_empty() {
                set.insert(r.gen_range(0..l));
            }
            set
        })
        .collect();
    LabelMatrix::new(l, rows).unwrap()
}

enum LossTarget {
    Ebce(LabelMatrix, EbceWeights),
    Nce(LabelMatrix, NceWeights),
    Lp(Vec<usize>),
}

struct LossCase {
    logits: ParamId,
    target: LossTarget,
}

impl Objective for LossCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let z = s.param(self.logits);
        let shape = s.graph.shape(z).to_vec();
        match &self.target {
            LossTarget::Ebce(y, w) => {
                let p = s.graph.sigmoid(z);
                ebce_graph(&mut s.graph, p, y, w)
            }
            LossTarget::Nce(y, w) => {
                let p = s.graph.softmax_rows(z, &Tensor::ones(shape))?;
                nce_graph(&mut s.graph, p, y, w)
            }
            LossTarget::Lp(classes) => {
                let p = s.graph.softmax_rows(z, &Tensor::ones(shape))?;
                lp_ce_graph(&mut s.graph, p, classes)
            }
        }
    }
}

pub fn loss_results(shapes: usize) -> Vec<CaseResult> {
    let opts = CheckOptions::default();
    let make = |kind: LossKind| {
        move |r: &mut ChaCha8Rng, _seed: u64| {
            let (n, l) = (r.gen_range(1..6), r.gen_range(2..6));
            let mut store = ParamStore::new();
            let logits = store.add("logits", uniform(r, vec![n, l], -2.0, 2.0));
            let target = match kind {
                LossKind::Ebce => {
                    let y = random_labels(r, n, l, false);
                    let w = ebce_weights(&y).unwrap();
                    LossTarget::Ebce(y, w)
                }
                LossKind::Nce => {
                    let y = random_labels(r, n, l, true);
                    let w = nce_weights(&y).unwrap();
                    LossTarget::Nce(y, w)
                }
                LossKind::LpCe => LossTarget::Lp((0..n).map(|_| r.gen_range(0..l)).collect()),
            };
            (store, LossCase { logits, target })
        }
    };
    vec![
        run_cases("loss ebce", shapes, 300, &opts, make(LossKind::Ebce)),
        run_cases("loss nce", shapes, 301, &opts, make(LossKind::Nce)),
        run_cases("loss lp_ce", shapes, 302, &opts, make(LossKind::LpCe)),
    ]
}

/// Random word table, sentence store and posts over the token set `t0..t{vocab}`.
pub fn toy_inputs(
    r: &mut ChaCha8Rng,
    posts: usize,
    word_dim: usize,
    sent_dim: usize,
    labels: usize,
) -> (Vec<Example>, Embeddings) {
    let vocab = 12;
    let mut table = EmbeddingTable::new(word_dim).unwrap();
    for i in 0..vocab {
        let v: Vec<f32> = (0..word_dim).map(|_| r.gen_range(-1.0..1.0)).collect();
        table.insert(&format!("t{i}"), &v).unwrap();
    }
    let mut store = SentenceStore::new(sent_dim).unwrap();
    let mut examples = Vec::new();
    for p in 0..posts {
        let sentences: Vec<Vec<String>> = (0..r.gen_range(1..4))
            .map(|_| {
                (0..r.gen_range(1..6))
                    .map(|_| format!("t{}", r.gen_range(0..vocab)))
                    .collect()
            })
            .collect();
        let v: Vec<f32> = (0..sentences.len() * sent_dim)
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        store.insert(&format!("p{p}"), v).unwrap();
        let mut set: LabelSet = (0..labels).filter(|_| r.gen_bool(0.4)).collect();
        if set.is_empty() {
            set.insert(r.gen_range(0..labels));
        }
        examples.push(Example {
            id: format!("p{p}"),
            sentences,
            labels: set,
        });
    }
    let emb = Embeddings {
        word: BTreeMap::from([("w".to_string(), table)]),
        sentence: BTreeMap::from([("s".to_string(), store)]),
    };
    (examples, emb)
}

pub fn toy_catalog() -> SourceCatalog {
    SourceCatalog::empty().with_word("w").with_sentence("s")
}

struct ModelCase {
    model: Model<f64>,
    examples: Vec<Example>,
    emb: Embeddings,
    weights: Option<EbceWeights>,
}

impl Objective for ModelCase {
    fn loss<T: Scalar>(&self, s: &mut Session<'_, T>) -> Result<Var> {
        let refs: Vec<&Example> = self.examples.iter().collect();
        let batch = PostBatch::<T>::build_padded(&refs, &self.emb, 3, 5)?;
        let model = self.model.cast::<T>();
        let (probs, _) = model.forward_graph(s, &batch)?;
        let y = batch.label_matrix(model.outputs())?;
        match &self.weights {
            Some(w) => ebce_graph(&mut s.graph, probs, &y, w),
            None => nce_graph(&mut s.graph, probs, &y, &nce_weights(&y)?),
        }
    }
}

/// Whole-model checks on tiny random architectures.
pub fn model_results(shapes: usize) -> CaseResult {
    let archs = [
        "s(wl(w), s)",
        "s(wc(w), s)",
        "s(wl(w), wc(w))",
        "s(wc(w), wl(w), s)",
    ];
    let opts = CheckOptions {
        max_coords: Some(6),
        ..CheckOptions::default()
    };
    run_cases("full model", shapes, 400, &opts, |r, _seed| {
        let arch = ArchExpr::parse(archs[r.gen_range(0..archs.len())], &toy_catalog()).unwrap();
        let labels = r.gen_range(2..4);
        let posts = r.gen_range(1..4);
        let (examples, emb) = toy_inputs(r, posts, 3, 2, labels);
        let ebce = r.gen_bool(0.5);
        let cfg = ModelConfig {
            lstm_dim: 2,
            attn_dim: 3,
            filters_per_kernel: 2,
            max_sentences: 3,
            max_words: 5,
            dropout: 0.25,
            loss: if ebce { LossKind::Ebce } else { LossKind::Nce },
            seed: r.gen(),
        };
        let model = Model::<f64>::build(&arch, &cfg, &emb.dims(), labels).unwrap();
        let weights = ebce.then(|| EbceWeights::uniform(labels));
        (
            model.params().clone(),
            ModelCase {
                model,
                examples,
                emb,
                weights,
            },
        )
    })
}

/// The synthetic corpus wrapped for `run_experiment`.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Corpus {
    let c = generate(spec).unwrap();
    Corpus {
        schema: c.schema,
        examples: c.examples,
        embeddings: c.embeddings,
        lexicons: None,
    }
}

/// Small dimensions and a learning rate high enough to converge in 10 epochs.
pub fn synthetic_config(loss: &str, runs: usize, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("arch", "s(wl(w1), s1)"),
        ("loss", loss),
        ("lstm_dim", "32"),
        ("attn_dim", "32"),
        ("max_sentences", "4"),
        ("max_words", "12"),
        ("lr", "0.02"),
        ("epochs", "10"),
        ("batch_size", "64"),
        ("dropout", "0.25"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.runs = runs;
    cfg.model.seed = seed;
    cfg
}
