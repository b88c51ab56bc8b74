use rand::Rng;

use super::{glorot, mask_column, valid_counts};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Session, Tensor, Var};

#[derive(Clone, Debug)]
struct Direction {
    input: ParamId,
    recurrent: ParamId,
    bias: ParamId,
}

impl Direction {
    fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        h: usize,
        rng: &mut R,
    ) -> Self {
        let input = store.add(
            format!("{name}.input"),
            glorot(rng, vec![d, 4 * h], d, 4 * h),
        );
        let recurrent = store.add(
            format!("{name}.recurrent"),
            glorot(rng, vec![h, 4 * h], h, 4 * h),
        );
        // gate order i, f, g, o; forget gate starts open
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].fill(1.0);
        let bias = store.add(
            format!("{name}.bias"),
            Tensor::from_f64(vec![4 * h], &b).expect("bias"),
        );
        Direction {
            input,
            recurrent,
            bias,
        }
    }
}

/// Bidirectional LSTM without peepholes. Output width is `2 * hidden_size`.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub input_size: usize,
    pub hidden_size: usize,
    forward: Direction,
    backward: Direction,
}

impl BiLstm {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let forward = Direction::new(store, &format!("{name}.fwd"), input_size, hidden_size, rng);
        let backward = Direction::new(store, &format!("{name}.bwd"), input_size, hidden_size, rng);
        BiLstm {
            input_size,
            hidden_size,
            forward,
            backward,
        }
    }

    pub fn output_size(&self) -> usize {
        2 * self.hidden_size
    }

    /// Every parameter id, forward direction first.
    pub fn params(&self) -> [ParamId; 6] {
        let (f, b) = (&self.forward, &self.backward);
        [f.input, f.recurrent, f.bias, b.input, b.recurrent, b.bias]
    }

    /// Single sequence: `seq` is `[T, D]`, `mask` is `[T]`; returns `[T, 2H]`.
    pub fn forward<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        seq: Var,
        mask: &Tensor<T>,
    ) -> Result<Var> {
        let shape = s.graph.shape(seq).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension(format!(
                "bilstm sequence must be [T, D], got {shape:?}"
            )));
        }
        let mask = mask.clone().reshape(vec![1, shape[0]])?;
        if valid_counts(&mask)[0] == 0 {
            return Err(Error::DegenerateLength(
                "bilstm input has no valid time step".into(),
            ));
        }
        let x = s.graph.reshape(seq, vec![1, shape[0], shape[1]])?;
        let out = self.forward_batch(s, x, &mask)?;
        s.graph.reshape(out, vec![shape[0], 2 * self.hidden_size])
    }

    /// Batched sequences: `x` is `[N, T, D]`, `mask` is `[N, T]`.
    ///
    /// Masked steps leave the recurrent state untouched and emit zeros, so a
    /// row with a valid prefix of length `n` behaves exactly like an
    /// unpadded sequence of length `n` in both directions. Rows without any
    /// valid step produce all-zero outputs.
    pub fn forward_batch<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        x: Var,
        mask: &Tensor<T>,
    ) -> Result<Var> {
        let shape = s.graph.shape(x).to_vec();
        let (n, t, d) = match shape.as_slice() {
            &[n, t, d] => (n, t, d),
            _ => {
                return Err(Error::Dimension(format!(
                    "bilstm batch must be [N, T, D], got {shape:?}"
                )))
            }
        };
        if d != self.input_size {
            return Err(Error::Dimension(format!(
                "bilstm expects width {}, got {d}",
                self.input_size
            )));
        }
        if mask.shape() != [n, t] {
            return Err(Error::Dimension(format!(
                "bilstm mask {:?} for input {shape:?}",
                mask.shape()
            )));
        }
        let flat = s.graph.reshape(x, vec![n * t, d])?;
        let fwd = self.run_direction(s, &self.forward, flat, mask, false)?;
        let bwd = self.run_direction(s, &self.backward, flat, mask, true)?;
        s.graph.concat_last(&[fwd, bwd])
    }

    fn run_direction<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        dir: &Direction,
        flat: Var,
        mask: &Tensor<T>,
        reverse: bool,
    ) -> Result<Var> {
        let (n, t) = (mask.shape()[0], mask.shape()[1]);
        let h = self.hidden_size;
        let wx = s.param(dir.input);
        let wh = s.param(dir.recurrent);
        let b = s.param(dir.bias);
        let projected = s.graph.matmul(flat, wx)?;
        let projected = s.graph.add(projected, b)?;
        let projected = s.graph.reshape(projected, vec![n, t, 4 * h])?;

        let zeros = s.constant(Tensor::zeros(vec![n, h]));
        let (mut hidden, mut cell) = (zeros, zeros);
        let mut outputs = vec![zeros; t];
        let steps: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        for step in steps {
            let (col, live) = mask_column(mask, step);
            if live == 0 {
                continue;
            }
            let xg = s.graph.select(projected, 1, step)?;
            let hg = s.graph.matmul(hidden, wh)?;
            let gates = s.graph.add(xg, hg)?;
            let i = s.graph.slice(gates, 1, 0, h)?;
            let i = s.graph.sigmoid(i);
            let f = s.graph.slice(gates, 1, h, h)?;
            let f = s.graph.sigmoid(f);
            let g = s.graph.slice(gates, 1, 2 * h, h)?;
            let g = s.graph.tanh(g);
            let o = s.graph.slice(gates, 1, 3 * h, h)?;
            let o = s.graph.sigmoid(o);
            let kept = s.graph.mul(f, cell)?;
            let written = s.graph.mul(i, g)?;
            let new_cell = s.graph.add(kept, written)?;
            let squashed = s.graph.tanh(new_cell);
            let new_hidden = s.graph.mul(o, squashed)?;
            if live == n {
                cell = new_cell;
                hidden = new_hidden;
                outputs[step] = new_hidden;
            } else {
                let keep = s.constant(col.map(|v| T::one() - v));
                let m = s.constant(col);
                cell = blend(s, cell, new_cell, m, keep)?;
                hidden = blend(s, hidden, new_hidden, m, keep)?;
                outputs[step] = s.graph.mul(new_hidden, m)?;
            }
        }
        s.graph.stack(&outputs, 1)
    }
}

/// `m * new + keep * old` with `keep = 1 - m`; exact for a 0/1 mask.
fn blend<T: Scalar>(s: &mut Session<'_, T>, old: Var, new: Var, m: Var, keep: Var) -> Result<Var> {
    let new = s.graph.mul(new, m)?;
    let old = s.graph.mul(old, keep)?;
    s.graph.add(new, old)
}
