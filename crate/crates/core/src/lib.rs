//! Session-based next-item recommendation with a target-attentive gated
//! graph network and a Transformer encoder (TAGNN++).
//!
//! This crate is `no_std` (it needs `alloc`) and holds every pure piece of
//! the engine:
//!
//! - [`tensor`] / [`tape`]: dense tensors and a reverse-mode differentiation
//!   tape with the handful of operations the model needs.
//! - [`graph`]: directed session graphs with degree-normalized adjacency.
//! - [`data`]: sessionizing, filtering, time splits, prefix expansion and
//!   padded batching.
//! - [`model`]: GGNN propagation, positional encoding, multi-head
//!   self-attention blocks, target-attentive readout and candidate scoring.
//! - [`optim`]: Adam with L2 penalty, step learning-rate decay and adaptive
//!   gradient clipping.
//! - [`metrics`]: HR@N / MRR@N and length-bucketed reports.
//! - [`gradcheck`]: central finite-difference checks against the tape.
//!
//! File formats, log parsing and the command line live in the `sbr` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod optim;
mod ops;
pub mod params;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::SessionGraph;
pub use model::{Model, ModelConfig};
pub use params::{ParamGrads, ParamId, ParamStore};
pub use rng::Rng;
pub use scalar::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
