//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The engine is a classic Wengert list: forward ops append nodes to a
//! [`Graph`], `backward` sweeps it once in reverse. Everything is 64-bit;
//! the gradient checks in this crate run at 1e-4 relative tolerance and
//! would not survive single precision.

pub mod fd;
mod graph;
pub(crate) mod matops;
mod tensor;

pub use fd::{finite_difference_gradient, max_rel_err, rel_err};
pub use graph::{Gradients, Graph, NodeId};
pub use tensor::Tensor;
