//! Brute-force reference implementations, written against dense 0/1
//! matrices rather than the library's label sets.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mlcat::labels::LabelSet;

pub fn dense(sets: &[LabelSet], l: usize) -> Vec<Vec<bool>> {
    sets.iter()
        .map(|s| (0..l).map(|j| s.contains(&j)).collect())
        .collect()
}

pub fn random_sets(r: &mut ChaCha8Rng, n: usize, l: usize, p: f64) -> Vec<LabelSet> {
    (0..n)
        .map(|_| (0..l).filter(|_| r.gen_bool(p)).collect())
        .collect()
}

/// Sort, diff, take the first largest gap (gaps within 1e-9 count as equal).
pub fn maxgap(probs: &[f64]) -> LabelSet {
    let l = probs.len();
    let mut idx: Vec<usize> = (0..l).collect();
    // insertion sort: stable, descending by value
    for i in 1..l {
        let mut k = i;
        while k > 0 && probs[idx[k - 1]] < probs[idx[k]] {
            idx.swap(k - 1, k);
            k -= 1;
        }
    }
    if l < 2 {
        return idx.into_iter().collect();
    }
    let diffs: Vec<f64> = (0..l - 1)
        .map(|k| probs[idx[k]] - probs[idx[k + 1]])
        .collect();
    let top = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let m = diffs.iter().position(|&d| d >= top - 1e-9).unwrap() + 1;
    idx[..m].iter().copied().collect()
}

pub struct Scores {
    pub f_i: f64,
    pub acc_i: f64,
    pub f_macro: f64,
    pub f_micro: f64,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

pub fn scores(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Scores {
    let n = pred.len();
    let l = pred[0].len();
    let (mut f_i, mut acc_i) = (0.0, 0.0);
    for i in 0..n {
        let (mut both, mut either, mut sizes) = (0, 0, 0);
        for j in 0..l {
            both += usize::from(pred[i][j] && gold[i][j]);
            either += usize::from(pred[i][j] || gold[i][j]);
            sizes += usize::from(pred[i][j]) + usize::from(gold[i][j]);
        }
        f_i += if sizes == 0 {
            1.0
        } else {
            2.0 * both as f64 / sizes as f64
        };
        acc_i += if either == 0 {
            1.0
        } else {
            both as f64 / either as f64
        };
    }
    let mut macro_sum = 0.0;
    for j in 0..l {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..n {
            match (pred[i][j], gold[i][j]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        macro_sum += f1(tp, fp, fn_);
    }
    // micro over the flattened matrices
    let flat_p: Vec<bool> = pred.iter().flatten().copied().collect();
    let flat_g: Vec<bool> = gold.iter().flatten().copied().collect();
    let tp = flat_p
        .iter()
        .zip(&flat_g)
        .filter(|(p, g)| **p && **g)
        .count();
    let fp = flat_p
        .iter()
        .zip(&flat_g)
        .filter(|(p, g)| **p && !**g)
        .count();
    let fn_ = flat_p
        .iter()
        .zip(&flat_g)
        .filter(|(p, g)| !**p && **g)
        .count();
    Scores {
        f_i: f_i / n as f64,
        acc_i: acc_i / n as f64,
        f_macro: macro_sum / l as f64,
        f_micro: f1(tp, fp, fn_),
    }
}

/// `w[j][v] = n / (2 * #{i : y_ij = v})`, `n / 2` when the count is zero.
pub fn ebce_weights(y: &[Vec<bool>]) -> Vec<[f64; 2]> {
    let n = y.len();
    let l = y[0].len();
    let mut out = vec![[0.0; 2]; l];
    for j in 0..l {
        for v in 0..2 {
            let mut count = 0;
            for row in y {
                if usize::from(row[j]) == v {
                    count += 1;
                }
            }
            out[j][v] = if count == 0 {
                n as f64 / 2.0
            } else {
                n as f64 / (2.0 * count as f64)
            };
        }
    }
    out
}

/// `w_j = n / sum_i (y_ij / |y_i+|)`, `n` for labels that never occur.
pub fn nce_weights(y: &[Vec<bool>]) -> Vec<f64> {
    let n = y.len();
    let l = y[0].len();
    (0..l)
        .map(|j| {
            let mut mass = 0.0;
            for row in y {
                let size = row.iter().filter(|&&b| b).count();
                if row[j] {
                    mass += 1.0 / size as f64;
                }
            }
            if mass == 0.0 {
                n as f64
            } else {
                n as f64 / mass
            }
        })
        .collect()
}

/// Unweighted mean binary cross-entropy.
pub fn mean_bce(p: &[Vec<f64>], y: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (pr, yr) in p.iter().zip(y) {
        for (&pij, &yij) in pr.iter().zip(yr) {
            total -= if yij { pij.ln() } else { (1.0 - pij).ln() };
            count += 1;
        }
    }
    total / count as f64
}

/// Standard categorical cross-entropy against one class per row.
pub fn cross_entropy(p: &[Vec<f64>], class: &[usize]) -> f64 {
    -p.iter()
        .zip(class)
        .map(|(row, &c)| row[c].ln())
        .sum::<f64>()
        / p.len() as f64
}

pub fn cohens_kappa(a: &[bool], b: &[bool]) -> f64 {
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    (agree - expected) / (1.0 - expected)
}
