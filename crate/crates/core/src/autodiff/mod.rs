//! Minimal reverse-mode automatic differentiation over dense `f64` tensors,
//! covering exactly the layers the alignment network needs.

mod graph;
mod kernels;
mod optim;
mod params;

pub use graph::{Gradients, Graph, Var};
pub use optim::Sgd;
pub use params::{ParamId, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
