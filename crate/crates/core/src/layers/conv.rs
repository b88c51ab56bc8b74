use rand::Rng;

use super::{glorot, valid_counts, zeros_param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// Bigram, trigram and 4-gram filters.
pub const KERNEL_SIZES: [usize; 3] = [2, 3, 4];

/// Convolution + max-over-time sentence encoder. Output width is
/// `3 * filters_per_kernel`.
///
/// Padding policy: a sentence with `n >= 1` valid words is treated as
/// `max(n, 4)` positions long, the extra positions being zero words, so every
/// kernel sees at least one window. Windows beyond that are masked. A
/// sentence with no valid word (padding sentence) encodes to zeros.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub input_size: usize,
    pub filters_per_kernel: usize,
    kernels: Vec<(usize, ParamId, ParamId)>,
}

impl ConvBlock {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        filters_per_kernel: usize,
        rng: &mut R,
    ) -> Self {
        let kernels = KERNEL_SIZES
            .iter()
            .map(|&k| {
                let w = store.add(
                    format!("{name}.k{k}.filters"),
                    glorot(
                        rng,
                        vec![k, input_size, filters_per_kernel],
                        k * input_size,
                        k * filters_per_kernel,
                    ),
                );
                let b = zeros_param(store, format!("{name}.k{k}.bias"), vec![filters_per_kernel]);
                (k, w, b)
            })
            .collect();
        ConvBlock {
            input_size,
            filters_per_kernel,
            kernels,
        }
    }

    pub fn output_size(&self) -> usize {
        KERNEL_SIZES.len() * self.filters_per_kernel
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.kernels.iter().flat_map(|&(_, w, b)| [w, b]).collect()
    }

    /// Single sentence `[W, D]` with mask `[W]`; returns `[c]`.
    pub fn forward<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        words: Var,
        mask: &Tensor<T>,
    ) -> Result<Var> {
        let shape = s.graph.shape(words).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "conv block input must be [W, D], got {shape:?}"
            )));
        }
        let x = s.graph.reshape(words, vec![1, shape[0], shape[1]])?;
        let mask = mask.clone().reshape(vec![1, shape[0]])?;
        let out = self.forward_batch(s, x, &mask)?;
        s.graph.reshape(out, vec![self.output_size()])
    }

    /// `x` is `[N, W, D]`, `mask` is `[N, W]`; returns `[N, c]`.
    pub fn forward_batch<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        x: Var,
        mask: &Tensor<T>,
    ) -> Result<Var> {
        let shape = s.graph.shape(x).to_vec();
        let (n, w, d) = match shape.as_slice() {
            &[n, w, d] => (n, w, d),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv block batch must be [N, W, D], got {shape:?}"
                )))
            }
        };
        if d != self.input_size {
            return Err(Error::Dimension(format!(
                "conv block expects width {}, got {d}",
                self.input_size
            )));
        }
        if mask.shape() != [n, w] {
            return Err(Error::Dimension(format!(
                "conv block mask {:?} for input {shape:?}",
                mask.shape()
            )));
        }
        // padded positions must be zero words
        let mask3 = mask.clone().reshape(vec![n, w, 1])?;
        let mut x = s.graph.mul_const(x, mask3)?;
        let min_len = *KERNEL_SIZES.iter().max().unwrap();
        let width = w.max(min_len);
        if w < min_len {
            let pad = s.constant(Tensor::zeros(vec![n, min_len - w, d]));
            x = s.graph.concat(&[x, pad], 1)?;
        }
        let mut eff = vec![T::zero(); n * width];
        for (row, &len) in valid_counts(mask).iter().enumerate() {
            let span = if len == 0 { 0 } else { len.max(min_len) };
            eff[row * width..row * width + span].fill(T::one());
        }
        let eff = Tensor::new(vec![n, width], eff)?;
        let mut pooled = Vec::with_capacity(self.kernels.len());
        for &(_, wid, bid) in &self.kernels {
            let filters = s.param(wid);
            let bias = s.param(bid);
            let fmap = s.graph.conv1d(x, filters, Some(bias), Some(&eff))?;
            pooled.push(s.graph.max_over_time(fmap)?);
        }
        s.graph.concat_last(&pooled)
    }
}
