//! Linear-attention (WKV) kernels and a byte-level RWKV language model.
//!
//! The crate is organised around the two execution modes of the WKV
//! operator: a batched form that processes a whole sequence at once
//! (training) and a stateful form that advances one token at a time with
//! O(1) work per token (inference). Both are exposed directly in [`wkv`],
//! assembled into full blocks in [`mixing`], and stacked into a trainable
//! model in [`model`]. [`training`] holds the loss, optimizer and exact
//! reverse-mode gradients; [`generation`] the sampling strategies.
//!
//! Everything is `f64`, deterministic, and `no_std` (with `alloc`): all
//! transcendental functions go through `libm`, so identical seeds produce
//! identical results on every platform.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attention;
pub mod error;
mod fmath;
pub mod generation;
pub mod mixing;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod wkv;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
