//! Image denoising by learned subspace projection.
//!
//! The crate bundles a small reverse-mode tensor engine ([`numerics`]), the
//! subspace attention block ([`ssa`]), the encoder/decoder network ([`net`]),
//! synthetic noise ([`noise`]), quality metrics ([`metrics`]), training and
//! evaluation ([`pipeline`]) and PNM/manifest I/O ([`io`]).
//!
//! Everything numeric is generic over [`Scalar`]: `f32` for training and
//! inference, `f64` for oracles and gradient checks.

pub mod checks;
pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod numerics;
pub mod pipeline;
pub mod random;
pub mod ssa;

pub use error::{Error, Result};
pub use numerics::{Scalar, Tape, Tensor, Var};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
