//! Core algorithms for Markov-state transformer stochastic generators:
//! series containers, marginal transforms, state construction, state
//! generation, the encoder-decoder model, post-processing, the SDE benchmark,
//! the translation-process baseline and evaluation metrics.
//!
//! The crate is `no_std` with `alloc`; all randomness is seeded explicitly.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod baseline;
pub mod clustering;
pub mod error;
pub mod linalg;
pub mod marginals;
pub mod markov;
pub mod metrics;
pub mod postprocess;
pub mod neural;
pub mod rng;
pub mod sdebench;
pub mod seq2seq;
pub mod series;
pub mod stategen;
pub mod tensor;
pub mod wind;

pub use error::{Error, Result};
pub use tensor::Tensor;
