//! Example-based and label-based multi-label metrics, the breakdown by
//! number of gold labels, and Cohen's kappa.
//!
//! Conventions: a row where both prediction and gold are empty scores 1.0 for
//! F_I and Acc_I; a label with zero precision and recall has F1 0.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelMatrix, LabelSet};

/// Groups with fewer rows than this are flagged in the breakdown.
pub const SMALL_GROUP: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Average {
    Macro,
    Micro,
}

fn check_pair(pred: &[LabelSet], gold: &[LabelSet]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} gold rows",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no rows to score".into()));
    }
    Ok(())
}

fn mean_over_rows(
    pred: &[LabelSet],
    gold: &[LabelSet],
    row: impl Fn(&LabelSet, &LabelSet) -> f64,
) -> Result<f64> {
    check_pair(pred, gold)?;
    Ok(pred.iter().zip(gold).map(|(p, g)| row(p, g)).sum::<f64>() / pred.len() as f64)
}

/// Mean Dice overlap `2|P∩G| / (|P| + |G|)`.
pub fn example_f1(pred: &[LabelSet], gold: &[LabelSet]) -> Result<f64> {
    mean_over_rows(pred, gold, |p, g| {
        let denom = p.len() + g.len();
        if denom == 0 {
            1.0
        } else {
            2.0 * p.intersection(g).count() as f64 / denom as f64
        }
    })
}

/// Mean Jaccard overlap `|P∩G| / |P∪G|`.
pub fn example_accuracy(pred: &[LabelSet], gold: &[LabelSet]) -> Result<f64> {
    mean_over_rows(pred, gold, |p, g| {
        let union = p.union(g).count();
        if union == 0 {
            1.0
        } else {
            p.intersection(g).count() as f64 / union as f64
        }
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if self.tp == 0 || denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn confusions(
    pred: &[LabelSet],
    gold: &[LabelSet],
    num_labels: usize,
) -> Result<Vec<Confusion>> {
    check_pair(pred, gold)?;
    let mut out = vec![Confusion::default(); num_labels];
    for (p, g) in pred.iter().zip(gold) {
        for &j in p.iter().chain(g) {
            if j >= num_labels {
                return Err(Error::dim(format!(
                    "label {j} out of range for {num_labels} labels"
                )));
            }
        }
        for &j in p {
            if g.contains(&j) {
                out[j].tp += 1;
            } else {
                out[j].fp += 1;
            }
        }
        for &j in g.difference(p) {
            out[j].fn_ += 1;
        }
    }
    Ok(out)
}

pub fn label_f1(
    pred: &[LabelSet],
    gold: &[LabelSet],
    num_labels: usize,
    average: Average,
) -> Result<f64> {
    let c = confusions(pred, gold, num_labels)?;
    Ok(match average {
        Average::Macro => {
            if num_labels == 0 {
                return Err(Error::EmptyInput("no labels to average over".into()));
            }
            c.iter().map(Confusion::f1).sum::<f64>() / num_labels as f64
        }
        Average::Micro => {
            let total = c.iter().fold(Confusion::default(), |a, b| Confusion {
                tp: a.tp + b.tp,
                fp: a.fp + b.fp,
                fn_: a.fn_ + b.fn_,
            });
            total.f1()
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub f_i: f64,
    pub acc_i: f64,
    pub f_macro: f64,
    pub f_micro: f64,
}

impl Summary {
    pub fn compute(pred: &[LabelSet], gold: &[LabelSet], num_labels: usize) -> Result<Self> {
        Ok(Summary {
            f_i: example_f1(pred, gold)?,
            acc_i: example_accuracy(pred, gold)?,
            f_macro: label_f1(pred, gold, num_labels, Average::Macro)?,
            f_micro: label_f1(pred, gold, num_labels, Average::Micro)?,
        })
    }

    /// Field-wise mean.
    pub fn mean(items: &[Summary]) -> Result<Summary> {
        if items.is_empty() {
            return Err(Error::EmptyInput("no summaries to average".into()));
        }
        let k = items.len() as f64;
        Ok(Summary {
            f_i: items.iter().map(|s| s.f_i).sum::<f64>() / k,
            acc_i: items.iter().map(|s| s.acc_i).sum::<f64>() / k,
            f_macro: items.iter().map(|s| s.f_macro).sum::<f64>() / k,
            f_micro: items.iter().map(|s| s.f_micro).sum::<f64>() / k,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountGroup {
    pub rows: usize,
    /// Fewer than [`SMALL_GROUP`] rows.
    pub small: bool,
    pub summary: Summary,
}

/// Metrics per number of gold labels; only counts that occur are present.
pub fn breakdown_by_label_count(
    pred: &[LabelSet],
    gold: &[LabelSet],
    num_labels: usize,
) -> Result<BTreeMap<usize, CountGroup>> {
    check_pair(pred, gold)?;
    let mut groups: BTreeMap<usize, (Vec<LabelSet>, Vec<LabelSet>)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let e = groups.entry(g.len()).or_default();
        e.0.push(p.clone());
        e.1.push(g.clone());
    }
    groups
        .into_iter()
        .map(|(k, (p, g))| {
            let summary = Summary::compute(&p, &g, num_labels)?;
            Ok((
                k,
                CountGroup {
                    rows: p.len(),
                    small: p.len() < SMALL_GROUP,
                    summary,
                },
            ))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: usize,
    pub summary: Summary,
    pub per_label: Vec<LabelScore>,
    pub by_label_count: BTreeMap<usize, CountGroup>,
}

impl MetricsReport {
    pub fn compute(pred: &[LabelSet], gold: &[LabelSet], label_names: &[String]) -> Result<Self> {
        let l = label_names.len();
        let per_label = confusions(pred, gold, l)?
            .iter()
            .zip(label_names)
            .map(|(c, name)| LabelScore {
                label: name.clone(),
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                support: c.tp + c.fn_,
            })
            .collect();
        Ok(MetricsReport {
            rows: pred.len(),
            summary: Summary::compute(pred, gold, l)?,
            per_label,
            by_label_count: breakdown_by_label_count(pred, gold, l)?,
        })
    }

    /// Line-oriented `key=value` rendering.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let s = &self.summary;
        let _ = writeln!(out, "rows={}", self.rows);
        let _ = writeln!(
            out,
            "f_i={:.6}\nacc_i={:.6}\nf_macro={:.6}\nf_micro={:.6}",
            s.f_i, s.acc_i, s.f_macro, s.f_micro
        );
        for (j, l) in self.per_label.iter().enumerate() {
            let _ = writeln!(
                out,
                "label.{j}.name={}\nlabel.{j}.precision={:.6}\nlabel.{j}.recall={:.6}\nlabel.{j}.f1={:.6}\nlabel.{j}.support={}",
                l.label, l.precision, l.recall, l.f1, l.support
            );
        }
        for (k, g) in &self.by_label_count {
            let t = &g.summary;
            let _ = writeln!(
                out,
                "by_count.{k}.rows={}\nby_count.{k}.small={}\nby_count.{k}.f_i={:.6}\nby_count.{k}.f_macro={:.6}\nby_count.{k}.acc_i={:.6}\nby_count.{k}.f_micro={:.6}",
                g.rows, g.small, t.f_i, t.f_macro, t.acc_i, t.f_micro
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Cohen's kappa for two binary raters. When chance agreement is 1 (both
/// raters constant and equal) the value is defined as 1.
pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "rater vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("kappa of empty vectors".into()));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let chance = pa * pb + (1.0 - pa) * (1.0 - pb);
    if chance >= 1.0 {
        return Ok(1.0);
    }
    Ok((agree - chance) / (1.0 - chance))
}

/// Average of per-category kappas over two annotations of the same rows.
pub fn mean_kappa(a: &LabelMatrix, b: &LabelMatrix) -> Result<f64> {
    if a.n() != b.n() || a.num_labels() != b.num_labels() {
        return Err(Error::dim(format!(
            "annotations of shape {}x{} and {}x{}",
            a.n(),
            a.num_labels(),
            b.n(),
            b.num_labels()
        )));
    }
    if a.num_labels() == 0 {
        return Err(Error::EmptyInput("no categories".into()));
    }
    let mut total = 0.0;
    for j in 0..a.num_labels() {
        total += cohens_kappa(&a.column(j), &b.column(j))?;
    }
    Ok(total / a.num_labels() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[usize]) -> LabelSet {
        v.iter().copied().collect()
    }

    #[test]
    fn example_based_cases() {
        assert!((example_f1(&[s(&[1])], &[s(&[1, 2])]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(
            (example_accuracy(&[s(&[0, 1])], &[s(&[1, 2])]).unwrap() - 1.0 / 3.0).abs() < 1e-12
        );
        assert_eq!(example_accuracy(&[s(&[0])], &[s(&[1])]).unwrap(), 0.0);
        assert_eq!(example_f1(&[s(&[])], &[s(&[])]).unwrap(), 1.0);
        assert!(matches!(example_f1(&[], &[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn label_based_cases() {
        let gold = vec![s(&[0]), s(&[0])];
        let pred = vec![s(&[0, 1]), s(&[0, 1])];
        assert_eq!(label_f1(&pred, &gold, 2, Average::Macro).unwrap(), 0.5);
        assert_eq!(label_f1(&gold, &gold, 1, Average::Micro).unwrap(), 1.0);
        assert!(label_f1(&pred, &gold, 1, Average::Macro).is_err());
    }

    #[test]
    fn breakdown_groups() {
        let gold = vec![s(&[0]), s(&[1])];
        let b = breakdown_by_label_count(&gold, &gold, 2).unwrap();
        assert_eq!(b.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert!(b[&1].small);
    }

    #[test]
    fn kappa_cases() {
        let k = cohens_kappa(&[true, true, false, false], &[true, false, false, false]).unwrap();
        assert_eq!(k, 0.5);
        assert_eq!(cohens_kappa(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&[true, true], &[true, true]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&[true, true], &[false, false]).unwrap(), 0.0);
    }

    #[test]
    fn report_renders() {
        let gold = vec![s(&[0]), s(&[0, 1])];
        let r = MetricsReport::compute(&gold, &gold, &["a".into(), "b".into()]).unwrap();
        let kv = r.to_key_value();
        assert!(kv.contains("f_i=1.000000"));
        assert!(kv.contains("by_count.2.rows=1"));
        let back: MetricsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
