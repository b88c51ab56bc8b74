//! Parameterized building blocks: biLSTM, additive attention, the
//! convolutional sentence encoder, and a dense output layer.
//!
//! Layers only hold [`ParamId`]s; values live in a [`ParamStore`] so the
//! same layer can run at any precision.

mod attention;
mod conv;
mod dense;
mod lstm;

pub use attention::Attention;
pub use conv::{ConvBlock, KERNEL_SIZES};
pub use dense::Dense;
pub use lstm::BiLstm;

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Uniform Glorot sample, drawn in f64 so every precision sees the same values.
pub(crate) fn glorot<T: Scalar, R: Rng>(
    rng: &mut R,
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_f64(shape, &data).expect("glorot shape")
}

pub(crate) fn zeros_param<T: Scalar>(
    store: &mut ParamStore<T>,
    name: String,
    shape: Vec<usize>,
) -> ParamId {
    store.add(name, Tensor::zeros(shape))
}

/// Mask column `[N, 1]` for one time step of an `[N, T]` mask.
pub(crate) fn mask_column<T: Scalar>(mask: &Tensor<T>, step: usize) -> (Tensor<T>, usize) {
    let (n, t) = (mask.shape()[0], mask.shape()[1]);
    let col: Vec<T> = (0..n).map(|r| mask.data()[r * t + step]).collect();
    let live = col.iter().filter(|&&m| m != T::zero()).count();
    (Tensor::new(vec![n, 1], col).expect("mask column"), live)
}

/// Number of valid positions per row of an `[N, T]` mask.
pub(crate) fn valid_counts<T: Scalar>(mask: &Tensor<T>) -> Vec<usize> {
    mask.rows()
        .map(|r| r.iter().filter(|&&m| m != T::zero()).count())
        .collect()
}
