//! Logistic regression on sparse features, trained full-batch with Adam.

use log::warn;
use serde::{Deserialize, Serialize};

use super::features::SparseRow;
use crate::error::{Error, Result};
use crate::labels::{LabelMatrix, LabelSet};
use crate::tensor::{ParamStore, Tensor};
use crate::train::{Adam, AdamConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogRegMode {
    /// One sigmoid output; targets are 0 or 1.
    Binary,
    /// Softmax over the classes `0..k`.
    Multiclass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Weight classes by `n / (k * count)`.
    pub balanced: bool,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            epochs: 200,
            adam: AdamConfig {
                lr: 0.05,
                ..AdamConfig::default()
            },
            balanced: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub mode: LogRegMode,
    pub n_features: usize,
    /// `[n_features, outputs]`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LogisticRegression {
    pub fn zeroed(mode: LogRegMode, n_features: usize, classes: usize) -> Self {
        let outputs = if mode == LogRegMode::Binary {
            1
        } else {
            classes
        };
        LogisticRegression {
            mode,
            n_features,
            weight: vec![0.0; n_features * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, row: &SparseRow) -> Vec<f64> {
        let k = self.outputs();
        let mut z = self.bias.clone();
        for &(i, x) in row {
            if i < self.n_features {
                for (c, zc) in z.iter_mut().enumerate() {
                    *zc += x * self.weight[i * k + c];
                }
            }
        }
        z
    }

    /// Positive-class probability (binary) or class distribution (multiclass).
    pub fn predict_proba(&self, row: &SparseRow) -> Vec<f64> {
        let z = self.logits(row);
        match self.mode {
            LogRegMode::Binary => vec![1.0 / (1.0 + (-z[0]).exp())],
            LogRegMode::Multiclass => softmax(&z),
        }
    }

    /// `0/1` for binary, the arg-max class for multiclass.
    pub fn predict(&self, row: &SparseRow) -> usize {
        let p = self.predict_proba(row);
        match self.mode {
            LogRegMode::Binary => usize::from(p[0] >= 0.5),
            LogRegMode::Multiclass => crate::predict::argmax(&p).unwrap_or(0),
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_features(features: &[SparseRow]) -> Result<usize> {
    let mut width = 0;
    for (r, row) in features.iter().enumerate() {
        for &(i, x) in row {
            if !x.is_finite() {
                return Err(Error::InvalidTarget(format!(
                    "feature row {r} has a non-finite value"
                )));
            }
            width = width.max(i + 1);
        }
    }
    Ok(width)
}

/// Trains a model and returns it with the weighted loss before each epoch.
pub fn logreg_train_traced(
    features: &[SparseRow],
    targets: &[usize],
    mode: LogRegMode,
    config: &LogRegConfig,
) -> Result<(LogisticRegression, Vec<f64>)> {
    if features.len() != targets.len() {
        return Err(Error::dim(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    let n_features = check_features(features)?.max(1);
    let classes = match mode {
        LogRegMode::Binary => {
            if let Some(&t) = targets.iter().find(|&&t| t > 1) {
                return Err(Error::InvalidTarget(format!("binary target {t}")));
            }
            2
        }
        LogRegMode::Multiclass => {
            let k = targets.iter().max().map_or(0, |m| m + 1);
            let distinct = targets
                .iter()
                .collect::<std::collections::BTreeSet<_>>()
                .len();
            if distinct < 2 {
                return Err(Error::InvalidTarget(
                    "multiclass target has a single class".into(),
                ));
            }
            k
        }
    };
    let n = features.len();
    let mut counts = vec![0usize; classes];
    for &t in targets {
        counts[t] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count() as f64;
    let class_weight: Vec<f64> = counts
        .iter()
        .map(|&c| {
            if !config.balanced || c == 0 {
                1.0
            } else {
                n as f64 / (present * c as f64)
            }
        })
        .collect();

    let mut model = LogisticRegression::zeroed(mode, n_features, classes);
    let k = model.outputs();
    let mut store = ParamStore::<f64>::new();
    store.add("weight", Tensor::zeros(vec![n_features, k]));
    store.add("bias", Tensor::zeros(vec![k]));
    let mut adam = Adam::new(config.adam, &store);
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut gw = vec![0.0; n_features * k];
        let mut gb = vec![0.0; k];
        let mut loss = 0.0;
        for (row, &t) in features.iter().zip(targets) {
            let p = model.predict_proba(row);
            let w = class_weight[t] / n as f64;
            // dL/dz = w * (p - onehot) for both heads
            let delta: Vec<f64> = match mode {
                LogRegMode::Binary => {
                    let y = t as f64;
                    loss -=
                        w * (y * p[0].max(1e-12).ln() + (1.0 - y) * (1.0 - p[0]).max(1e-12).ln());
                    vec![w * (p[0] - y)]
                }
                LogRegMode::Multiclass => {
                    loss -= w * p[t].max(1e-12).ln();
                    p.iter()
                        .enumerate()
                        .map(|(c, &pc)| w * (pc - if c == t { 1.0 } else { 0.0 }))
                        .collect()
                }
            };
            for (c, d) in delta.iter().enumerate() {
                gb[c] += d;
            }
            for &(i, x) in row {
                for (c, d) in delta.iter().enumerate() {
                    gw[i * k + c] += x * d;
                }
            }
        }
        trace.push(loss);
        adam.step(
            &mut store,
            &[
                Tensor::new(vec![n_features, k], gw)?,
                Tensor::new(vec![k], gb)?,
            ],
        )?;
        let mut ids = store.ids();
        let (wid, bid) = (ids.next().expect("weight"), ids.next().expect("bias"));
        model.weight.copy_from_slice(store.get(wid).data());
        model.bias.copy_from_slice(store.get(bid).data());
    }
    Ok((model, trace))
}

pub fn logreg_train(
    features: &[SparseRow],
    targets: &[usize],
    mode: LogRegMode,
    config: &LogRegConfig,
) -> Result<LogisticRegression> {
    Ok(logreg_train_traced(features, targets, mode, config)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BinaryModel {
    Trained(LogisticRegression),
    /// The label had a single value in training.
    Constant(bool),
}

impl BinaryModel {
    pub fn predict(&self, row: &SparseRow) -> bool {
        match self {
            BinaryModel::Trained(m) => m.predict(row) == 1,
            BinaryModel::Constant(v) => *v,
        }
    }
}

/// One independent binary classifier per label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryRelevance {
    pub models: Vec<BinaryModel>,
}

impl BinaryRelevance {
    pub fn predict(&self, row: &SparseRow) -> LabelSet {
        self.models
            .iter()
            .enumerate()
            .filter(|(_, m)| m.predict(row))
            .map(|(j, _)| j)
            .collect()
    }
}

pub fn br_train(
    features: &[SparseRow],
    y: &LabelMatrix,
    config: &LogRegConfig,
) -> Result<BinaryRelevance> {
    if features.len() != y.n() {
        return Err(Error::dim(format!(
            "{} feature rows for {} label rows",
            features.len(),
            y.n()
        )));
    }
    let models = (0..y.num_labels())
        .map(|j| {
            let targets: Vec<usize> = (0..y.n()).map(|i| usize::from(y.get(i, j))).collect();
            let pos = targets.iter().filter(|&&t| t == 1).count();
            if pos == 0 || pos == targets.len() {
                warn!("label {j} is constant in training; predicting {}", pos > 0);
                return Ok(BinaryModel::Constant(pos > 0));
            }
            logreg_train(features, &targets, LogRegMode::Binary, config).map(BinaryModel::Trained)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinaryRelevance { models })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::features::dense_to_sparse;

    #[test]
    fn zero_init_is_uniform() {
        let m = LogisticRegression::zeroed(LogRegMode::Multiclass, 3, 4);
        assert_eq!(
            m.predict_proba(&dense_to_sparse(&[1.0, 2.0, 3.0])),
            vec![0.25; 4]
        );
        let b = LogisticRegression::zeroed(LogRegMode::Binary, 3, 2);
        assert_eq!(b.predict_proba(&vec![(0, 5.0)]), vec![0.5]);
    }

    #[test]
    fn single_class_multiclass_is_an_error() {
        let x = vec![dense_to_sparse(&[1.0]); 3];
        assert!(matches!(
            logreg_train(
                &x,
                &[2, 2, 2],
                LogRegMode::Multiclass,
                &LogRegConfig::default()
            ),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn constant_label_gets_constant_model() {
        let x = vec![dense_to_sparse(&[1.0]), dense_to_sparse(&[-1.0])];
        let y = LabelMatrix::new(2, vec![LabelSet::from([0]), LabelSet::new()]).unwrap();
        let br = br_train(&x, &y, &LogRegConfig::default()).unwrap();
        assert_eq!(br.models.len(), 2);
        assert_eq!(br.models[1], BinaryModel::Constant(false));
        assert_eq!(br.predict(&x[0]), LabelSet::from([0]));
    }
}
