//! Class-imbalance-weighted multi-label losses.
//!
//! EBCE: `-(1/n) sum_i (1/L) sum_j w[j][y_ij] (y_ij log p + (1 - y_ij) log(1 - p))`
//! with `w[j][v] = n / (2 |{i : y_ij = v}|)`.
//!
//! NCE: `-(1/n) sum_i (1/|y_i+|) sum_j w_c[j] y_ij log p` with
//! `w_c[j] = n / sum_i (y_ij / |y_i+|)`.
//!
//! Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

pub const EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Weighted binary cross-entropy over a sigmoid head.
    Ebce,
    /// Normalized cross-entropy over a softmax head.
    Nce,
    /// Plain cross-entropy over label-powerset classes.
    LpCe,
}

impl LossKind {
    pub fn uses_softmax(self) -> bool {
        !matches!(self, LossKind::Ebce)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Ebce => "ebce",
            LossKind::Nce => "nce",
            LossKind::LpCe => "lp_ce",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ebce" => Ok(LossKind::Ebce),
            "nce" => Ok(LossKind::Nce),
            "lp_ce" | "lp" => Ok(LossKind::LpCe),
            other => Err(Error::Config(format!(
                "unknown loss {other:?} (expected ebce, nce or lp_ce)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EbceWeights {
    /// `w[j][v]` for label `j` and value `v`.
    pub w: Vec<[f64; 2]>,
    /// `(label, value)` pairs whose count was zero and got the `n / 2` guard.
    pub clamped: Vec<(usize, usize)>,
}

impl EbceWeights {
    pub fn uniform(num_labels: usize) -> Self {
        EbceWeights {
            w: vec![[1.0, 1.0]; num_labels],
            clamped: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NceWeights {
    pub w: Vec<f64>,
    /// Labels that never occur positively; their weight is set to `n`.
    pub missing: Vec<usize>,
}

impl NceWeights {
    pub fn uniform(num_labels: usize) -> Self {
        NceWeights {
            w: vec![1.0; num_labels],
            missing: Vec::new(),
        }
    }
}

pub fn ebce_weights(y: &LabelMatrix) -> Result<EbceWeights> {
    let n = y.n();
    if n == 0 {
        return Err(Error::EmptyInput("label matrix has no rows".into()));
    }
    let nf = n as f64;
    let mut w = Vec::with_capacity(y.num_labels());
    let mut clamped = Vec::new();
    for j in 0..y.num_labels() {
        let pos = y.positive_count(j);
        let counts = [n - pos, pos];
        let mut pair = [0.0; 2];
        for v in 0..2 {
            pair[v] = if counts[v] == 0 {
                warn!("label {j} has no rows with value {v}; using weight n/2");
                clamped.push((j, v));
                nf / 2.0
            } else {
                nf / (2.0 * counts[v] as f64)
            };
        }
        w.push(pair);
    }
    Ok(EbceWeights { w, clamped })
}

pub fn nce_weights(y: &LabelMatrix) -> Result<NceWeights> {
    let n = y.n();
    if n == 0 {
        return Err(Error::EmptyInput("label matrix has no rows".into()));
    }
    y.require_nonempty_rows()?;
    let mut mass = vec![0.0f64; y.num_labels()];
    for row in y.rows() {
        let share = 1.0 / row.len() as f64;
        for &j in row {
            mass[j] += share;
        }
    }
    let mut missing = Vec::new();
    let w = mass
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            if m == 0.0 {
                warn!("label {j} never occurs; using weight n");
                missing.push(j);
                n as f64
            } else {
                n as f64 / m
            }
        })
        .collect();
    Ok(NceWeights { w, missing })
}

fn check_probs<T: Scalar>(g: &Graph<T>, probs: Var, y: &LabelMatrix) -> Result<()> {
    let shape = g.shape(probs);
    if shape != [y.n(), y.num_labels()] {
        return Err(Error::dim(format!(
            "probabilities {shape:?} for a {}x{} label matrix",
            y.n(),
            y.num_labels()
        )));
    }
    Ok(())
}

fn clamped_log<T: Scalar>(g: &mut Graph<T>, p: Var) -> Var {
    let p = g.clamp(p, T::of(EPS), T::of(1.0 - EPS));
    g.log(p)
}

/// Weighted sum `-(scale) * sum(coef * log(p))`.
fn weighted_log_sum<T: Scalar>(
    g: &mut Graph<T>,
    p: Var,
    coef: Vec<f64>,
    shape: &[usize],
    scale: f64,
) -> Result<Var> {
    let logp = clamped_log(g, p);
    let terms = g.mul_const(logp, Tensor::from_f64(shape.to_vec(), &coef)?)?;
    let total = g.sum(terms);
    Ok(g.scale(total, T::of(-scale)))
}

/// EBCE on the tape; `probs` is `[n, L]` from a sigmoid head.
pub fn ebce_graph<T: Scalar>(
    g: &mut Graph<T>,
    probs: Var,
    y: &LabelMatrix,
    w: &EbceWeights,
) -> Result<Var> {
    check_probs(g, probs, y)?;
    let (n, l) = (y.n(), y.num_labels());
    if w.w.len() != l {
        return Err(Error::dim(format!(
            "{} EBCE weights for {l} labels",
            w.w.len()
        )));
    }
    let mut pos = vec![0.0; n * l];
    let mut neg = vec![0.0; n * l];
    for i in 0..n {
        for j in 0..l {
            if y.get(i, j) {
                pos[i * l + j] = w.w[j][1];
            } else {
                neg[i * l + j] = w.w[j][0];
            }
        }
    }
    let scale = 1.0 / (n * l) as f64;
    let shape = [n, l];
    let a = weighted_log_sum(g, probs, pos, &shape, scale)?;
    let q = g.one_minus(probs);
    let b = weighted_log_sum(g, q, neg, &shape, scale)?;
    g.add(a, b)
}

/// NCE on the tape; `probs` is `[n, L]` from a softmax head.
pub fn nce_graph<T: Scalar>(
    g: &mut Graph<T>,
    probs: Var,
    y: &LabelMatrix,
    w: &NceWeights,
) -> Result<Var> {
    check_probs(g, probs, y)?;
    y.require_nonempty_rows()?;
    let (n, l) = (y.n(), y.num_labels());
    if w.w.len() != l {
        return Err(Error::dim(format!(
            "{} NCE weights for {l} labels",
            w.w.len()
        )));
    }
    let mut coef = vec![0.0; n * l];
    for (i, row) in y.rows().iter().enumerate() {
        let share = 1.0 / row.len() as f64;
        for &j in row {
            coef[i * l + j] = w.w[j] * share;
        }
    }
    weighted_log_sum(g, probs, coef, &[n, l], 1.0 / n as f64)
}

/// Cross-entropy against one class per row (label powerset training).
pub fn lp_ce_graph<T: Scalar>(g: &mut Graph<T>, probs: Var, classes: &[usize]) -> Result<Var> {
    let shape = g.shape(probs).to_vec();
    if shape.len() != 2 || shape[0] != classes.len() {
        return Err(Error::dim(format!(
            "probabilities {shape:?} for {} targets",
            classes.len()
        )));
    }
    let (n, k) = (shape[0], shape[1]);
    let mut coef = vec![0.0; n * k];
    for (i, &c) in classes.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidTarget(format!(
                "class {c} out of range for {k} classes"
            )));
        }
        coef[i * k + c] = 1.0;
    }
    weighted_log_sum(g, probs, coef, &shape, 1.0 / n as f64)
}

fn eval_loss<T: Scalar>(
    probs: &Tensor<T>,
    f: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.constant(probs.clone());
    let loss = f(&mut g, p)?;
    Ok(g.value(loss).item()?.f64())
}

pub fn ebce_loss<T: Scalar>(probs: &Tensor<T>, y: &LabelMatrix, w: &EbceWeights) -> Result<f64> {
    eval_loss(probs, |g, p| ebce_graph(g, p, y, w))
}

pub fn nce_loss<T: Scalar>(probs: &Tensor<T>, y: &LabelMatrix, w: &NceWeights) -> Result<f64> {
    eval_loss(probs, |g, p| nce_graph(g, p, y, w))
}

pub fn lp_ce_loss<T: Scalar>(probs: &Tensor<T>, classes: &[usize]) -> Result<f64> {
    eval_loss(probs, |g, p| lp_ce_graph(g, p, classes))
}
