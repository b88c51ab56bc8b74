//! Turning probability vectors into label sets.

use std::cmp::Ordering;

use crate::labels::LabelSet;
use crate::scalar::Scalar;

/// Gaps closer than this are treated as equal when picking the cutoff, so
/// that decimal inputs like `[0.4, 0.35, 0.2, 0.05]` tie as written.
pub const GAP_TIE_TOLERANCE: f64 = 1e-9;

/// Labels with probability at least 0.5; may be empty.
pub fn predict_sigmoid<T: Scalar>(probs: &[T]) -> LabelSet {
    probs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.f64() >= 0.5)
        .map(|(j, _)| j)
        .collect()
}

/// Indices sorted by descending probability; equal values keep index order.
pub fn descending_order<T: Scalar>(probs: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(Ordering::Equal));
    order
}

/// Number of top-ranked classes kept by the max-gap rule, in `1..L`.
pub fn maxgap_cutoff<T: Scalar>(probs: &[T], order: &[usize]) -> usize {
    if probs.len() < 2 {
        return probs.len();
    }
    let mut best = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for k in 0..order.len() - 1 {
        let gap = probs[order[k]].f64() - probs[order[k + 1]].f64();
        if gap > best_gap + GAP_TIE_TOLERANCE {
            best = k + 1;
            best_gap = gap;
        }
    }
    best
}

/// Sort descending, take differences of neighbours, and keep the classes
/// before the largest drop. Ties pick the earliest drop.
pub fn predict_maxgap<T: Scalar>(probs: &[T]) -> LabelSet {
    let order = descending_order(probs);
    let m = maxgap_cutoff(probs, &order);
    order[..m].iter().copied().collect()
}

/// First index of the largest value.
pub fn argmax<T: Scalar>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> LabelSet {
        v.iter().copied().collect()
    }

    #[test]
    fn sigmoid_rounding() {
        assert_eq!(predict_sigmoid(&[0.9, 0.2, 0.51]), set(&[0, 2]));
        assert_eq!(predict_sigmoid(&[0.1, 0.49]), set(&[]));
        assert_eq!(predict_sigmoid(&[0.5f32]), set(&[0]));
    }

    #[test]
    fn maxgap_cases() {
        assert_eq!(predict_maxgap(&[0.5, 0.3, 0.15, 0.05]), set(&[0]));
        assert_eq!(predict_maxgap(&[0.4, 0.35, 0.2, 0.05]), set(&[0, 1]));
        assert_eq!(predict_maxgap(&[0.25; 4]), set(&[0]));
        assert_eq!(predict_maxgap(&[0.05, 0.2, 0.35, 0.4]), set(&[3, 2]));
        assert_eq!(predict_maxgap(&[0.7]), set(&[0]));
    }

    #[test]
    fn argmax_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax::<f64>(&[]), None);
    }
}
