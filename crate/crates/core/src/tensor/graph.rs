use rand::Rng;

use super::value::{numel, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Binary {
        kind: BinaryKind,
        a: Var,
        b: Var,
    },
    Unary {
        kind: UnaryKind,
        x: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    AddScalar {
        x: Var,
    },
    Clamp {
        x: Var,
        lo: T,
        hi: T,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Reshape {
        x: Var,
    },
    Select {
        x: Var,
        axis: usize,
        index: usize,
    },
    Stack {
        inputs: Vec<Var>,
        axis: usize,
    },
    Sum {
        x: Var,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    Softmax {
        x: Var,
    },
    Conv1d {
        x: Var,
        filters: Var,
        bias: Option<Var>,
        valid: Vec<bool>,
    },
    MaxOverTime {
        x: Var,
        argmax: Vec<usize>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Reverse-mode tape.
///
/// Operations append nodes in evaluation order, so the node list is already
/// topologically sorted and `backward` walks it in reverse.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `v`, or `None` when `v` was not reached from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v` with zeros for unreachable nodes.
    pub fn get_or_zeros(&self, graph: &Graph<T>, v: Var) -> Tensor<T> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(graph.shape(v).to_vec()),
        }
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() {
            1
        } else {
            a[i - (rank - a.len())]
        };
        let db = if i < rank - b.len() {
            1
        } else {
            b[i - (rank - b.len())]
        };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For every flat index of `out`, the flat index of the broadcast source.
fn broadcast_map(src: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let off = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..src.len()).rev() {
        if src[d] != 1 {
            strides[d + off] = acc;
        }
        acc *= src[d];
    }
    let n = numel(out);
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..n {
        map.push(cur);
        for d in (0..rank).rev() {
            idx[d] += 1;
            cur += strides[d];
            if idx[d] < out[d] {
                break;
            }
            cur -= strides[d] * out[d];
            idx[d] = 0;
        }
    }
    map
}

fn matmul_into<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn mask_flags<T: Scalar>(mask: &Tensor<T>) -> Vec<bool> {
    mask.data().iter().map(|&m| m != T::zero()).collect()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Records a leaf; it is tracked when `t.requires_grad()` is set.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let tracked = t.requires_grad();
        self.push(t, Op::Leaf, tracked)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor<T>) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn values(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul of {sa:?} and {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        matmul_into(self.values(a), self.values(b), m, k, n, &mut out);
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), tracked))
    }

    fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let shape = broadcast_shape(&sa, &sb)
            .ok_or_else(|| Error::dim(format!("cannot broadcast {sa:?} with {sb:?}")))?;
        let f = |x: T, y: T| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let (va, vb) = (self.values(a), self.values(b));
        let data: Vec<T> = if sa == sb {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let ma = broadcast_map(&sa, &shape);
            let mb = broadcast_map(&sb, &shape);
            ma.iter().zip(&mb).map(|(&i, &j)| f(va[i], vb[j])).collect()
        };
        let tracked = self.is_tracked(a) || self.is_tracked(b);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Binary { kind, a, b },
            tracked,
        ))
    }

    /// Broadcasting addition.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    /// Broadcasting element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    /// Product with an untracked tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        let c = self.constant(c);
        self.mul(a, c)
    }

    fn unary(&mut self, x: Var, kind: UnaryKind) -> Var {
        let f = |v: T| match kind {
            UnaryKind::Tanh => v.tanh(),
            UnaryKind::Sigmoid => sigmoid(v),
            UnaryKind::Exp => v.exp(),
            UnaryKind::Log => v.ln(),
        };
        let value = self.value(x).map(f);
        let tracked = self.is_tracked(x);
        self.push(value, Op::Unary { kind, x }, tracked)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Exp)
    }

    /// Natural logarithm. Callers clamp first when inputs may touch zero.
    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, UnaryKind::Log)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let tracked = self.is_tracked(x);
        self.push(value, Op::Scale { x, factor }, tracked)
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        let tracked = self.is_tracked(x);
        self.push(value, Op::AddScalar { x }, tracked)
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let neg = self.scale(x, -T::one());
        self.add_scalar(neg, T::one())
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let value = self.value(x).map(|v| v.max(lo).min(hi));
        let tracked = self.is_tracked(x);
        self.push(value, Op::Clamp { x, lo, hi }, tracked)
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::dim("concat of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(format!("concat axis {axis} for shape {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::dim(format!(
                    "concat of {base:?} with {s:?} on axis {axis}"
                )));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &v in inputs {
                let block = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.values(v)[o * block..(o + 1) * block]);
            }
        }
        let tracked = inputs.iter().any(|&v| self.is_tracked(v));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    /// Concatenation along the last axis.
    pub fn concat_last(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::dim("concat of nothing"))?;
        let axis = self.shape(*first).len().saturating_sub(1);
        self.concat(inputs, axis)
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::dim(format!(
                "slice [{start}, {}) of axis {axis} in {s:?}",
                start + len
            )));
        }
        let (outer, dim, inner) = split_axis(&s, axis);
        let mut shape = s.clone();
        shape[axis] = len;
        let src = self.values(x);
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Slice { x, axis, start },
            tracked,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let tracked = self.is_tracked(x);
        Ok(self.push(value, Op::Reshape { x }, tracked))
    }

    /// Picks one index along `axis`, dropping that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || index >= s[axis] {
            return Err(Error::dim(format!(
                "select {index} on axis {axis} of {s:?}"
            )));
        }
        let (outer, dim, inner) = split_axis(&s, axis);
        let mut shape = s.clone();
        shape.remove(axis);
        let src = self.values(x);
        let mut data = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * dim + index) * inner;
            data.extend_from_slice(&src[base..base + inner]);
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Select { x, axis, index },
            tracked,
        ))
    }

    /// Stacks equally shaped tensors along a new axis.
    pub fn stack(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::dim("stack of nothing"))?;
        let base = self.shape(*first).to_vec();
        if axis > base.len() {
            return Err(Error::dim(format!("stack axis {axis} for shape {base:?}")));
        }
        if let Some(bad) = inputs.iter().find(|&&v| self.shape(v) != base.as_slice()) {
            return Err(Error::dim(format!(
                "stack of {base:?} with {:?}",
                self.shape(*bad)
            )));
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis..].iter().product();
        let mut shape = base.clone();
        shape.insert(axis, inputs.len());
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for &v in inputs {
                data.extend_from_slice(&self.values(v)[o * inner..(o + 1) * inner]);
            }
        }
        let tracked = inputs.iter().any(|&v| self.is_tracked(v));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Stack {
                inputs: inputs.to_vec(),
                axis,
            },
            tracked,
        ))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let tracked = self.is_tracked(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, tracked)
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::dim(format!("sum over axis {axis} of {s:?}")));
        }
        let (outer, dim, inner) = split_axis(&s, axis);
        let mut shape = s.clone();
        shape.remove(axis);
        let src = self.values(x);
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut data[o * inner..(o + 1) * inner];
            for j in 0..dim {
                let row = &src[(o * dim + j) * inner..(o * dim + j + 1) * inner];
                for (d, &v) in dst.iter_mut().zip(row) {
                    *d += v;
                }
            }
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::SumAxis { x, axis }, tracked))
    }

    fn softmax_impl(&mut self, x: Var, mask: Option<&Tensor<T>>, allow_empty: bool) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.is_empty() {
            return Err(Error::Rank("softmax of a scalar".into()));
        }
        let valid = match mask {
            Some(m) if m.shape() != s.as_slice() => {
                return Err(Error::dim(format!(
                    "softmax mask {:?} for logits {s:?}",
                    m.shape()
                )));
            }
            Some(m) => mask_flags(m),
            None => vec![true; numel(&s)],
        };
        let width = *s.last().unwrap();
        let src = self.values(x);
        let mut data = vec![T::zero(); src.len()];
        for (r, (row, out)) in src.chunks(width).zip(data.chunks_mut(width)).enumerate() {
            let live = &valid[r * width..(r + 1) * width];
            let mut peak = T::neg_infinity();
            for (&v, &ok) in row.iter().zip(live) {
                if ok && v > peak {
                    peak = v;
                }
            }
            if peak == T::neg_infinity() {
                if allow_empty && !live.iter().any(|&ok| ok) {
                    continue;
                }
                return Err(Error::EmptySupport(format!(
                    "softmax row {r} has no unmasked entry"
                )));
            }
            let mut z = T::zero();
            for ((o, &v), &ok) in out.iter_mut().zip(row).zip(live) {
                if ok {
                    *o = (v - peak).exp();
                    z += *o;
                }
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        let tracked = self.is_tracked(x);
        Ok(self.push(Tensor::new(s, data)?, Op::Softmax { x }, tracked))
    }

    /// Softmax over the last axis. Masked entries (mask value 0) come out as
    /// exactly 0; a row without any unmasked entry is an error.
    pub fn softmax(&mut self, x: Var, mask: Option<&Tensor<T>>) -> Result<Var> {
        self.softmax_impl(x, mask, false)
    }

    /// Like [`Graph::softmax`], but fully masked rows (padding) yield zeros.
    pub fn softmax_rows(&mut self, x: Var, mask: &Tensor<T>) -> Result<Var> {
        self.softmax_impl(x, Some(mask), true)
    }

    /// Valid sliding-window convolution along the word axis.
    ///
    /// `x` is `[W, D]` or `[N, W, D]`, `filters` is `[k, D, F]`, `bias` is
    /// `[F]`, `mask` is `[W]` or `[N, W]`. Windows touching a masked position
    /// are set to negative infinity for the following max pooling.
    pub fn conv1d(
        &mut self,
        x: Var,
        filters: Var,
        bias: Option<Var>,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let fs = self.shape(filters).to_vec();
        let batched = xs.len() == 3;
        let (n, w, d) = match xs.as_slice() {
            &[w, d] => (1, w, d),
            &[n, w, d] => (n, w, d),
            _ => {
                return Err(Error::dim(format!(
                    "conv1d input must be [W, D] or [N, W, D], got {xs:?}"
                )))
            }
        };
        let (k, f) = match fs.as_slice() {
            &[k, fd, f] if fd == d => (k, f),
            _ => {
                return Err(Error::dim(format!(
                    "conv1d filters {fs:?} for input {xs:?}"
                )))
            }
        };
        if let Some(b) = bias {
            if self.shape(b) != [f] {
                return Err(Error::dim(format!(
                    "conv1d bias {:?} for {f} filters",
                    self.shape(b)
                )));
            }
        }
        if w < k {
            return Err(Error::DegenerateLength(format!(
                "sequence of {w} positions is shorter than kernel {k}"
            )));
        }
        let live = match mask {
            None => vec![true; n * w],
            Some(m) if m.len() == n * w => mask_flags(m),
            Some(m) => {
                return Err(Error::dim(format!(
                    "conv1d mask {:?} for input {xs:?}",
                    m.shape()
                )))
            }
        };
        let t_out = w - k + 1;
        let mut valid = vec![false; n * t_out];
        for b in 0..n {
            for t in 0..t_out {
                valid[b * t_out + t] = live[b * w + t..b * w + t + k].iter().all(|&ok| ok);
            }
        }
        let xv = self.values(x);
        let wv = self.values(filters);
        let bv = bias.map(|b| self.values(b));
        let mut data = vec![T::neg_infinity(); n * t_out * f];
        for b in 0..n {
            for t in 0..t_out {
                if !valid[b * t_out + t] {
                    continue;
                }
                let out = &mut data[(b * t_out + t) * f..(b * t_out + t + 1) * f];
                match bv {
                    Some(bias) => out.copy_from_slice(bias),
                    None => out.fill(T::zero()),
                }
                for r in 0..k {
                    let xrow = &xv[(b * w + t + r) * d..(b * w + t + r + 1) * d];
                    matmul_into(xrow, &wv[r * d * f..(r + 1) * d * f], 1, d, f, out);
                }
            }
        }
        let shape = if batched {
            vec![n, t_out, f]
        } else {
            vec![t_out, f]
        };
        let tracked = self.is_tracked(x)
            || self.is_tracked(filters)
            || bias.is_some_and(|b| self.is_tracked(b));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Conv1d {
                x,
                filters,
                bias,
                valid,
            },
            tracked,
        ))
    }

    /// Per-filter maximum over the time axis of `[T, F]` or `[N, T, F]`.
    ///
    /// Ties go to the first position. A column that is entirely negative
    /// infinity (every window masked) yields 0 and passes no gradient.
    pub fn max_over_time(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let (n, t, f) = match s.as_slice() {
            &[t, f] => (1, t, f),
            &[n, t, f] => (n, t, f),
            _ => {
                return Err(Error::dim(format!(
                    "max_over_time needs [T, F] or [N, T, F], got {s:?}"
                )))
            }
        };
        if t == 0 {
            return Err(Error::DegenerateLength(
                "max_over_time over zero steps".into(),
            ));
        }
        let src = self.values(x);
        let mut data = vec![T::zero(); n * f];
        let mut argmax = vec![usize::MAX; n * f];
        for b in 0..n {
            for c in 0..f {
                let mut best = T::neg_infinity();
                for step in 0..t {
                    let v = src[(b * t + step) * f + c];
                    if v > best {
                        best = v;
                        argmax[b * f + c] = step;
                    }
                }
                if argmax[b * f + c] != usize::MAX {
                    data[b * f + c] = best;
                }
            }
        }
        let shape = if s.len() == 3 { vec![n, f] } else { vec![f] };
        let tracked = self.is_tracked(x);
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::MaxOverTime { x, argmax },
            tracked,
        ))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - rate)`; identity
    /// when `train` is false or `rate` is zero.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        if !train || rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(Error::Config(format!(
                "dropout rate {rate} must be below 1"
            )));
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let shape = self.shape(x).to_vec();
        let data = (0..numel(&shape))
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        self.mul_const(x, Tensor::new(shape, data)?)
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Rank(format!(
                "backward needs a scalar loss, shape is {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.is_tracked(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.is_tracked(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); self.nodes[v.0].value.len()]);
        f(slot);
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (self.values(a), self.values(b));
                self.accumulate(grads, a, |ga| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &vb[p * n..(p + 1) * n];
                            let mut acc = T::zero();
                            for (&x, &y) in grow.iter().zip(brow) {
                                acc += x * y;
                            }
                            ga[i * k + p] += acc;
                        }
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = va[i * k + p];
                            if av == T::zero() {
                                continue;
                            }
                            for (d, &x) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += av * x;
                            }
                        }
                    }
                });
            }
            &Op::Binary { kind, a, b } => {
                let shape = node.value.shape();
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (va, vb) = (self.values(a), self.values(b));
                let same = sa == sb;
                let ma = if same {
                    Vec::new()
                } else {
                    broadcast_map(sa, shape)
                };
                let mb = if same {
                    Vec::new()
                } else {
                    broadcast_map(sb, shape)
                };
                let ia = |i: usize| if same { i } else { ma[i] };
                let ib = |i: usize| if same { i } else { mb[i] };
                self.accumulate(grads, a, |ga| {
                    for (i, &gi) in g.iter().enumerate() {
                        ga[ia(i)] += match kind {
                            BinaryKind::Add | BinaryKind::Sub => gi,
                            BinaryKind::Mul => gi * vb[ib(i)],
                        };
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for (i, &gi) in g.iter().enumerate() {
                        gb[ib(i)] += match kind {
                            BinaryKind::Add => gi,
                            BinaryKind::Sub => -gi,
                            BinaryKind::Mul => gi * va[ia(i)],
                        };
                    }
                });
            }
            &Op::Unary { kind, x } => {
                let xv = self.values(x);
                self.accumulate(grads, x, |gx| {
                    for i in 0..g.len() {
                        let y = out[i];
                        gx[i] += g[i]
                            * match kind {
                                UnaryKind::Tanh => T::one() - y * y,
                                UnaryKind::Sigmoid => y * (T::one() - y),
                                UnaryKind::Exp => y,
                                UnaryKind::Log => T::one() / xv[i],
                            };
                    }
                });
            }
            &Op::Scale { x, factor } => self.accumulate(grads, x, |gx| {
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi * factor;
                }
            }),
            &Op::AddScalar { x } | &Op::Reshape { x } => self.accumulate(grads, x, |gx| {
                for (d, &gi) in gx.iter_mut().zip(g) {
                    *d += gi;
                }
            }),
            &Op::Clamp { x, lo, hi } => {
                let xv = self.values(x);
                self.accumulate(grads, x, |gx| {
                    for i in 0..g.len() {
                        if xv[i] >= lo && xv[i] <= hi {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let shape = node.value.shape();
                let (outer, dim, inner) = split_axis(shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let width = self.shape(v)[*axis];
                    self.accumulate(grads, v, |gv| {
                        for o in 0..outer {
                            let src =
                                &g[(o * dim + offset) * inner..(o * dim + offset + width) * inner];
                            for (d, &gi) in gv[o * width * inner..(o + 1) * width * inner]
                                .iter_mut()
                                .zip(src)
                            {
                                *d += gi;
                            }
                        }
                    });
                    offset += width;
                }
            }
            &Op::Slice { x, axis, start } => {
                let (outer, dim, inner) = split_axis(self.shape(x), axis);
                let len = node.value.shape()[axis];
                self.accumulate(grads, x, |gx| {
                    for o in 0..outer {
                        let base = o * dim * inner + start * inner;
                        for (d, &gi) in gx[base..base + len * inner]
                            .iter_mut()
                            .zip(&g[o * len * inner..])
                        {
                            *d += gi;
                        }
                    }
                });
            }
            &Op::Select { x, axis, index } => {
                let (outer, dim, inner) = split_axis(self.shape(x), axis);
                self.accumulate(grads, x, |gx| {
                    for o in 0..outer {
                        let base = (o * dim + index) * inner;
                        for (d, &gi) in gx[base..base + inner]
                            .iter_mut()
                            .zip(&g[o * inner..(o + 1) * inner])
                        {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Stack { inputs, axis } => {
                let base = self.shape(inputs[0]);
                let outer: usize = base[..*axis].iter().product();
                let inner: usize = base[*axis..].iter().product();
                let m = inputs.len();
                for (j, &v) in inputs.iter().enumerate() {
                    self.accumulate(grads, v, |gv| {
                        for o in 0..outer {
                            let src = &g[(o * m + j) * inner..(o * m + j + 1) * inner];
                            for (d, &gi) in gv[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                                *d += gi;
                            }
                        }
                    });
                }
            }
            &Op::Sum { x } => self.accumulate(grads, x, |gx| {
                for d in gx.iter_mut() {
                    *d += g[0];
                }
            }),
            &Op::SumAxis { x, axis } => {
                let (outer, dim, inner) = split_axis(self.shape(x), axis);
                self.accumulate(grads, x, |gx| {
                    for o in 0..outer {
                        for j in 0..dim {
                            let dst = &mut gx[(o * dim + j) * inner..(o * dim + j + 1) * inner];
                            for (d, &gi) in dst.iter_mut().zip(&g[o * inner..(o + 1) * inner]) {
                                *d += gi;
                            }
                        }
                    }
                });
            }
            &Op::Softmax { x } => {
                let width = *node.value.shape().last().unwrap();
                self.accumulate(grads, x, |gx| {
                    for ((y, gr), dx) in out
                        .chunks(width)
                        .zip(g.chunks(width))
                        .zip(gx.chunks_mut(width))
                    {
                        let dot: T = y.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..width {
                            dx[j] += y[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Conv1d {
                x,
                filters,
                bias,
                valid,
            } => {
                let xs = self.shape(*x);
                let (n, w, d) = if xs.len() == 3 {
                    (xs[0], xs[1], xs[2])
                } else {
                    (1, xs[0], xs[1])
                };
                let fs = self.shape(*filters);
                let (k, f) = (fs[0], fs[2]);
                let t_out = w - k + 1;
                let xv = self.values(*x);
                let wv = self.values(*filters);
                self.accumulate(grads, *filters, |gw| {
                    for b in 0..n {
                        for t in 0..t_out {
                            if !valid[b * t_out + t] {
                                continue;
                            }
                            let grow = &g[(b * t_out + t) * f..(b * t_out + t + 1) * f];
                            for r in 0..k {
                                let xrow = &xv[(b * w + t + r) * d..(b * w + t + r + 1) * d];
                                for (c, &xval) in xrow.iter().enumerate() {
                                    if xval == T::zero() {
                                        continue;
                                    }
                                    let dst = &mut gw[(r * d + c) * f..(r * d + c + 1) * f];
                                    for (dd, &gi) in dst.iter_mut().zip(grow) {
                                        *dd += xval * gi;
                                    }
                                }
                            }
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    for b in 0..n {
                        for t in 0..t_out {
                            if !valid[b * t_out + t] {
                                continue;
                            }
                            let grow = &g[(b * t_out + t) * f..(b * t_out + t + 1) * f];
                            for r in 0..k {
                                let dst = &mut gx[(b * w + t + r) * d..(b * w + t + r + 1) * d];
                                for (c, dd) in dst.iter_mut().enumerate() {
                                    let wrow = &wv[(r * d + c) * f..(r * d + c + 1) * f];
                                    let mut acc = T::zero();
                                    for (&wi, &gi) in wrow.iter().zip(grow) {
                                        acc += wi * gi;
                                    }
                                    *dd += acc;
                                }
                            }
                        }
                    }
                });
                if let Some(bias) = *bias {
                    self.accumulate(grads, bias, |gb| {
                        for (row, &ok) in g.chunks(f).zip(valid) {
                            if ok {
                                for (dd, &gi) in gb.iter_mut().zip(row) {
                                    *dd += gi;
                                }
                            }
                        }
                    });
                }
            }
            Op::MaxOverTime { x, argmax } => {
                let xs = self.shape(*x);
                let (t, f) = if xs.len() == 3 {
                    (xs[1], xs[2])
                } else {
                    (xs[0], xs[1])
                };
                self.accumulate(grads, *x, |gx| {
                    for (slot, &step) in argmax.iter().enumerate() {
                        if step == usize::MAX {
                            continue;
                        }
                        let (b, c) = (slot / f, slot % f);
                        gx[(b * t + step) * f + c] += g[slot];
                    }
                });
            }
        }
    }
}
