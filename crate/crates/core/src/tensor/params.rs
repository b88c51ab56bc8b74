use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.values.iter_mut()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
        }
    }

    /// Replaces every value, keeping names; shapes must match.
    pub fn load(&mut self, values: Vec<Tensor<T>>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::dim(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        for (i, (old, new)) in self.values.iter().zip(&values).enumerate() {
            if old.shape() != new.shape() {
                return Err(Error::dim(format!(
                    "parameter {} has shape {:?}, got {:?}",
                    self.names[i],
                    old.shape(),
                    new.shape()
                )));
            }
        }
        self.values = values;
        Ok(())
    }
}

/// One forward (and optionally backward) pass: a fresh tape plus lazily
/// bound parameters and the dropout stream.
pub struct Session<'a, T: Scalar> {
    pub graph: Graph<T>,
    params: &'a ParamStore<T>,
    bound: Vec<Option<Var>>,
    train: bool,
    rng: ChaCha8Rng,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(params: &'a ParamStore<T>, train: bool, seed: u64) -> Self {
        Session {
            graph: Graph::new(),
            params,
            bound: vec![None; params.len()],
            train,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Inference session: no dropout.
    pub fn eval(params: &'a ParamStore<T>) -> Self {
        Self::new(params, false, 0)
    }

    pub fn is_training(&self) -> bool {
        self.train
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.leaf(self.params.get(id).clone().tracked());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.graph.constant(t)
    }

    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        self.graph.dropout(x, rate, self.train, &mut self.rng)
    }

    /// Gradient for every parameter in store order; unbound parameters get zeros.
    pub fn param_grads(&self, loss: Var) -> Result<Vec<Tensor<T>>> {
        let grads = self.graph.backward(loss)?;
        Ok(self
            .params
            .ids()
            .map(|id| match self.bound[id.0] {
                Some(v) => grads.get_or_zeros(&self.graph, v),
                None => Tensor::zeros(self.params.get(id).shape().to_vec()),
            })
            .collect())
    }
}
