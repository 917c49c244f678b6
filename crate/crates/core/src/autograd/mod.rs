//! Minimal reverse-mode automatic differentiation over dense `f32` tensors.
//!
//! Only the operations the networks in this crate need are provided. All
//! kernels run single-threaded and process batch samples independently, so a
//! sample's result never depends on what else is in the batch.

mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use graph::{Grads, Graph, Var};
pub use optim::{Adam, AdamConfig};
pub use params::{Binding, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
