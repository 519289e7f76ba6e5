pub mod autodiff;
pub mod corpus;
pub mod descriptor;
pub mod error;
pub mod experiment;
pub mod fsio;
pub mod metrics;
pub mod network;
pub mod retrieval;
pub mod spatial;
pub mod tensor;

pub use error::{PanError, Result};
pub use spatial::{AffineParams, SamplingGrid};
pub use tensor::Tensor;
