//! Reverse-mode automatic differentiation over dense row-major tensors.
//!
//! A [`Graph`] records every primitive applied during one forward pass; a
//! single [`Graph::backward`] call then walks the record in reverse and
//! returns gradients for every trainable leaf. The op catalog is
//! deliberately small: it holds the layers the separation network needs
//! and nothing else.

mod gradcheck;
mod graph;
mod kernels;
pub mod nn;
mod real;
mod tensor;

pub use gradcheck::{grad_check, grad_check_many, GradCheckOptions, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use real::Real;
pub use tensor::Tensor;
