//! Dense tensors, the reverse-mode tape, and parameter bookkeeping.

pub mod gradcheck;
mod graph;
mod params;
mod value;

pub use graph::{Gradients, Graph, Var};
pub use params::{ParamId, ParamStore, Session};
pub use value::Tensor;
