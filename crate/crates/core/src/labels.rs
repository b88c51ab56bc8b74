use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Indices of the labels that apply to one post.
pub type LabelSet = BTreeSet<usize>;

/// Binary label matrix `y` stored as one positive set per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    num_labels: usize,
    rows: Vec<LabelSet>,
}

impl LabelMatrix {
    pub fn new(num_labels: usize, rows: Vec<LabelSet>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if let Some(&j) = row.iter().next_back() {
                if j >= num_labels {
                    return Err(Error::dim(format!(
                        "row {i} has label {j} but there are only {num_labels} labels"
                    )));
                }
            }
        }
        Ok(LabelMatrix { num_labels, rows })
    }

    pub fn from_dense(dense: &[Vec<bool>]) -> Result<Self> {
        let num_labels = dense.first().map_or(0, Vec::len);
        let mut rows = Vec::with_capacity(dense.len());
        for (i, r) in dense.iter().enumerate() {
            if r.len() != num_labels {
                return Err(Error::dim(format!(
                    "row {i} has {} columns, expected {num_labels}",
                    r.len()
                )));
            }
            rows.push(
                r.iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(j, _)| j)
                    .collect(),
            );
        }
        Ok(LabelMatrix { num_labels, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn rows(&self) -> &[LabelSet] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &LabelSet {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.rows[i].contains(&j)
    }

    /// Column `j` as a binary vector.
    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r.contains(&j)).collect()
    }

    pub fn positive_count(&self, j: usize) -> usize {
        self.rows.iter().filter(|r| r.contains(&j)).count()
    }

    /// Fails with an invalid-target error naming the first empty row.
    pub fn require_nonempty_rows(&self) -> Result<()> {
        match self.rows.iter().position(BTreeSet::is_empty) {
            Some(i) => Err(Error::InvalidTarget(format!(
                "row {i} has no positive label"
            ))),
            None => Ok(()),
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Result<Tensor<T>> {
        let mut data = vec![T::zero(); self.n() * self.num_labels];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row {
                data[i * self.num_labels + j] = T::one();
            }
        }
        Tensor::new(vec![self.n(), self.num_labels], data)
    }

    pub fn select(&self, indices: &[usize]) -> LabelMatrix {
        LabelMatrix {
            num_labels: self.num_labels,
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip() {
        let y =
            LabelMatrix::from_dense(&[vec![true, false, true], vec![false, false, false]]).unwrap();
        assert_eq!(y.row(0), &LabelSet::from([0, 2]));
        assert_eq!(y.column(2), vec![true, false]);
        assert!(y.require_nonempty_rows().is_err());
        let t = y.to_tensor::<f64>().unwrap();
        assert_eq!(t.data(), &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_label() {
        assert!(LabelMatrix::new(2, vec![LabelSet::from([2])]).is_err());
    }
}
