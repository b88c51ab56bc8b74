use rand::Rng;

use super::{glorot, zeros_param};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamStore, Session, Var};

/// Fully connected layer `x · W + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub input_size: usize,
    pub output_size: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        output_size: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot(rng, vec![input_size, output_size], input_size, output_size),
        );
        let bias = zeros_param(store, format!("{name}.bias"), vec![output_size]);
        Dense {
            input_size,
            output_size,
            weight,
            bias,
        }
    }

    /// Layer with all-zero weights (used by the logistic-regression baseline).
    pub fn zeroed<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        output_size: usize,
    ) -> Self {
        let weight = zeros_param(
            store,
            format!("{name}.weight"),
            vec![input_size, output_size],
        );
        let bias = zeros_param(store, format!("{name}.bias"), vec![output_size]);
        Dense {
            input_size,
            output_size,
            weight,
            bias,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    /// `x` is `[N, input_size]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let shape = s.graph.shape(x);
        if shape.len() != 2 || shape[1] != self.input_size {
            return Err(Error::Dimension(format!(
                "dense layer expects [N, {}], got {shape:?}",
                self.input_size
            )));
        }
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        let xw = s.graph.matmul(x, w)?;
        s.graph.add(xw, b)
    }
}
