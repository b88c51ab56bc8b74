use rand::Rng;

use super::{glorot, zeros_param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

/// Additive attention with a learned context vector:
/// `u_t = tanh(W s_t + b)`, `a = softmax(u_t . c)`, `v = sum_t a_t s_t`.
#[derive(Clone, Debug)]
pub struct Attention {
    pub input_size: usize,
    pub attn_dim: usize,
    projection: ParamId,
    bias: ParamId,
    context: ParamId,
}

impl Attention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        attn_dim: usize,
        rng: &mut R,
    ) -> Self {
        let projection = store.add(
            format!("{name}.projection"),
            glorot(rng, vec![input_size, attn_dim], input_size, attn_dim),
        );
        let bias = zeros_param(store, format!("{name}.bias"), vec![attn_dim]);
        let context = store.add(
            format!("{name}.context"),
            glorot(rng, vec![attn_dim, 1], attn_dim, 1),
        );
        Attention {
            input_size,
            attn_dim,
            projection,
            bias,
            context,
        }
    }

    pub fn params(&self) -> [ParamId; 3] {
        [self.projection, self.bias, self.context]
    }

    /// Single sequence `[T, h]` with mask `[T]`; returns `(vec [h], weights [T])`.
    pub fn forward<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        states: Var,
        mask: &Tensor<T>,
    ) -> Result<(Var, Var)> {
        let shape = s.graph.shape(states).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "attention states must be [T, h], got {shape:?}"
            )));
        }
        if !mask.data().iter().any(|&m| m != T::zero()) {
            return Err(Error::EmptySupport(
                "attention over a fully masked sequence".into(),
            ));
        }
        let mask = mask.clone().reshape(vec![1, shape[0]])?;
        let batched = s.graph.reshape(states, vec![1, shape[0], shape[1]])?;
        let (vec, weights) = self.forward_batch(s, batched, &mask)?;
        let vec = s.graph.reshape(vec, vec![shape[1]])?;
        let weights = s.graph.reshape(weights, vec![shape[0]])?;
        Ok((vec, weights))
    }

    /// `states` is `[N, T, h]`, `mask` is `[N, T]`; returns `([N, h], [N, T])`.
    /// Fully masked rows get zero weights and a zero vector.
    pub fn forward_batch<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        states: Var,
        mask: &Tensor<T>,
    ) -> Result<(Var, Var)> {
        let shape = s.graph.shape(states).to_vec();
        let (n, t, h) = match shape.as_slice() {
            &[n, t, h] => (n, t, h),
            _ => {
                return Err(Error::Dimension(format!(
                    "attention batch must be [N, T, h], got {shape:?}"
                )))
            }
        };
        if h != self.input_size {
            return Err(Error::Dimension(format!(
                "attention expects width {}, got {h}",
                self.input_size
            )));
        }
        if mask.shape() != [n, t] {
            return Err(Error::Dimension(format!(
                "attention mask {:?} for states {shape:?}",
                mask.shape()
            )));
        }
        let w = s.param(self.projection);
        let b = s.param(self.bias);
        let c = s.param(self.context);
        let flat = s.graph.reshape(states, vec![n * t, h])?;
        let u = s.graph.matmul(flat, w)?;
        let u = s.graph.add(u, b)?;
        let u = s.graph.tanh(u);
        let scores = s.graph.matmul(u, c)?;
        let scores = s.graph.reshape(scores, vec![n, t])?;
        let weights = s.graph.softmax_rows(scores, mask)?;
        let column = s.graph.reshape(weights, vec![n, t, 1])?;
        let weighted = s.graph.mul(states, column)?;
        let vec = s.graph.sum_axis(weighted, 1)?;
        Ok((vec, weights))
    }
}
