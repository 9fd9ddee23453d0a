//! Importance-weighted structure learning for scene-graph-shaped factor graphs.
//!
//! The crate is organised bottom-up:
//!
//! - [`graph`]: scene-graph topology and the synthetic task generator.
//! - [`nn`]: small tanh MLPs with exact reverse-mode gradients.
//! - [`scores`]: per-node log marginal score vectors, from MLPs or from explicit
//!   potential tables (the latter eliminated exactly, for verification).
//! - [`sampler`]: Gumbel-Softmax reparameterization, its log-density and the
//!   temperature schedule.
//! - [`bound`]: the s-sample importance-weighted bound and its pathwise gradient.
//! - [`emd`]: entropic mirror descent on the probability simplex.
//! - [`inference`]: per-node variational inference and posterior readout.
//! - [`learning`]: cross-entropy learning, the training loop and metrics.
//! - [`oracle`]: brute-force enumeration ground truth.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod bound;
pub mod emd;
mod error;
pub mod graph;
pub mod inference;
pub mod learning;
pub mod math;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod scores;

pub use error::{Error, Result};
