#![no_std]
// NaN-rejecting `!(x >= 0.0)` guards and index loops that mirror the math are intended
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
//! Convolutional sparse autoencoder pipeline for two-channel sEMG gesture
//! recognition.
//!
//! Everything here is pure computation over `alloc`: the layer kernel with
//! hand-written gradients ([`nn`]), signal segmentation and synthetic data
//! ([`signal`]), the autoencoder ([`csae`]), the attention-pooled classifier
//! ([`classifier`]), user adaptation and class expansion ([`adaptation`]),
//! metrics ([`eval`]) and the comparison baselines ([`baselines`]).
//! File formats and the CLI live in the `csae` crate.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adaptation;
pub mod baselines;
pub mod classifier;
pub mod csae;
mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod signal;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
