//! Hierarchical multi-label classification of short texts.
//!
//! Generic over the floating-point element type; training runs in `f32`
//! while gradient verification uses an `f64` shadow of the same model.

pub mod arch;
pub mod baselines;
pub mod data;
pub mod error;
pub mod labels;
pub mod layers;
pub mod ling;
pub mod losses;
pub mod metrics;
pub mod predict;
pub mod scalar;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Graph, ParamStore, Session, Tensor, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
