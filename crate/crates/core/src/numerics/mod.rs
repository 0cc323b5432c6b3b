//! Dense tensors, a recorded reverse-mode graph and first-order optimizers.

mod graph;
mod kernels;
mod optim;
mod tensor;

pub use graph::{Graph, NodeId};
pub use kernels::conv1d;
pub use optim::{ema_update, Optimizer, OptimizerConfig, OptimizerKind, Parameter};
pub use tensor::Tensor;
