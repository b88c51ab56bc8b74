mod common;

use rand::Rng;

use mlcat::layers::{Attention, BiLstm, ConvBlock, KERNEL_SIZES};
use mlcat::tensor::ParamStore;
use mlcat::{Session, Tensor};

fn zero_all(store: &mut ParamStore<f64>) {
    for t in store.values_mut() {
        t.data_mut().fill(0.0);
    }
}

#[test]
fn zero_weight_lstm_outputs_zero() {
    let mut r = common::rng(1);
    let mut store = ParamStore::<f64>::new();
    let lstm = BiLstm::new(&mut store, "l", 4, 3, &mut r);
    zero_all(&mut store);
    let x = common::uniform(&mut r, vec![5, 4], -3.0, 3.0);
    let mut s = Session::eval(&store);
    let xv = s.constant(x);
    let out = lstm.forward(&mut s, xv, &Tensor::ones(vec![5])).unwrap();
    let out = s.graph.value(out);
    assert_eq!(out.shape(), &[5, 6]);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_step_matches_the_ends_of_a_longer_sequence() {
    let mut r = common::rng(2);
    let mut store = ParamStore::<f64>::new();
    let lstm = BiLstm::new(&mut store, "l", 3, 2, &mut r);
    let long = common::uniform(&mut r, vec![4, 3], -1.0, 1.0);
    let first = Tensor::new(vec![1, 3], long.data()[..3].to_vec()).unwrap();
    let last = Tensor::new(vec![1, 3], long.data()[9..].to_vec()).unwrap();
    let run = |x: Tensor<f64>| {
        let t = x.shape()[0];
        let mut s = Session::eval(&store);
        let xv = s.constant(x);
        let out = lstm.forward(&mut s, xv, &Tensor::ones(vec![t])).unwrap();
        s.graph.value(out).clone()
    };
    let full = run(long);
    let (a, b) = (run(first), run(last));
    // forward half of step 0 and backward half of step T-1 only saw one input
    assert_eq!(&a.data()[..2], &full.data()[..2]);
    assert_eq!(&b.data()[2..], &full.data()[3 * 4 + 2..]);
}

#[test]
fn zero_scores_give_uniform_attention() {
    let mut r = common::rng(3);
    let mut store = ParamStore::<f64>::new();
    let attn = Attention::new(&mut store, "a", 4, 5, &mut r);
    zero_all(&mut store);
    let x = common::uniform(&mut r, vec![6, 4], -1.0, 1.0);
    let mask = Tensor::new(vec![6], vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    let mut s = Session::eval(&store);
    let xv = s.constant(x.clone());
    let (vec, w) = attn.forward(&mut s, xv, &mask).unwrap();
    let w = s.graph.value(w).data().to_vec();
    for (t, &v) in w.iter().enumerate() {
        let want = if t < 3 { 1.0 / 3.0 } else { 0.0 };
        assert!((v - want).abs() < 1e-12, "weight {t} = {v}");
    }
    for d in 0..4 {
        let mean = (0..3).map(|t| x.at(&[t, d])).sum::<f64>() / 3.0;
        assert!((s.graph.value(vec).at(&[d]) - mean).abs() < 1e-12);
    }
}

#[test]
fn hundred_filters_per_kernel_give_width_300() {
    let mut r = common::rng(4);
    let mut store = ParamStore::<f32>::new();
    let conv = ConvBlock::new(&mut store, "c", 300, 100, &mut r);
    assert_eq!(conv.output_size(), 300);
    let x = Tensor::<f32>::zeros(vec![7, 300]);
    let mut s = Session::eval(&store);
    let xv = s.constant(x);
    let out = conv.forward(&mut s, xv, &Tensor::ones(vec![7])).unwrap();
    // zero words and zero biases
    assert_eq!(s.graph.value(out).shape(), &[300]);
    assert!(s.graph.value(out).data().iter().all(|&v| v == 0.0));
}

/// Every window of the zero-extended sentence, then the max.
fn conv_oracle(
    store: &ParamStore<f64>,
    conv: &ConvBlock,
    words: &[Vec<f64>],
    f: usize,
) -> Vec<f64> {
    let n = words.len();
    let d = conv.input_size;
    let mut out = Vec::new();
    let params = conv.params();
    for (i, &k) in KERNEL_SIZES.iter().enumerate() {
        let (w, b) = (store.get(params[2 * i]), store.get(params[2 * i + 1]));
        for filter in 0..f {
            if n == 0 {
                out.push(0.0);
                continue;
            }
            let padded = n.max(4);
            let mut best = f64::NEG_INFINITY;
            for start in 0..=padded - k {
                let mut acc = b.at(&[filter]);
                for o in 0..k {
                    let pos = start + o;
                    for c in 0..d {
                        let x = if pos < n { words[pos][c] } else { 0.0 };
                        acc += x * w.at(&[o, c, filter]);
                    }
                }
                best = best.max(acc);
            }
            out.push(best);
        }
    }
    out
}

#[test]
fn conv_matches_window_enumeration() {
    let mut r = common::rng(5);
    for case in 0..50 {
        let (d, f) = (r.gen_range(1..5), r.gen_range(1..4));
        let n = r.gen_range(0..9);
        let mut store = ParamStore::<f64>::new();
        let conv = ConvBlock::new(&mut store, "c", d, f, &mut r);
        for t in store.values_mut() {
            for v in t.data_mut() {
                *v = r.gen_range(-1.0..1.0);
            }
        }
        let words: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let width = n + r.gen_range(1..4);
        let mut data = vec![0.0; width * d];
        let mut mask = vec![0.0; width];
        for (p, w) in words.iter().enumerate() {
            data[p * d..(p + 1) * d].copy_from_slice(w);
            mask[p] = 1.0;
        }
        let mut s = Session::eval(&store);
        let x = s.constant(Tensor::new(vec![width, d], data).unwrap());
        let out = conv
            .forward(&mut s, x, &Tensor::new(vec![width], mask).unwrap())
            .unwrap();
        let got = s.graph.value(out).data().to_vec();
        let want = conv_oracle(&store, &conv, &words, f);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6, "case {case}: {got:?} vs {want:?}");
        }
    }
}
