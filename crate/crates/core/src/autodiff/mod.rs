//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation of a forward pass as a node; operands
//! always precede their users, so one reverse walk over the node list
//! delivers gradients to every trainable leaf.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{analytic_gradient, finite_diff_check, max_relative_error, numeric_gradient};
pub use graph::{Elementwise, Graph, Var};
pub use tensor::Tensor;
