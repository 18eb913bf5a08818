//! Minimal deterministic tensor engine with reverse-mode differentiation.

pub mod container;
pub mod conv;
pub mod gradcheck;
pub mod gram;
pub mod linalg;
mod scalar;
mod tape;
mod tensor;

pub use gram::Normalization;
pub use scalar::{DType, Scalar};
pub use tape::{batched_gram_solve, Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) mod tests;
