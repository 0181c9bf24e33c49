//! Decentralized differentially private SGD with without-replacement
//! sampling.
//!
//! Nodes each hold a private shard of the training data and update a shared
//! global model with Gaussian-noised gradient steps. Two training schemes are
//! provided: fully collaborative training ([`collaborative`]), where every
//! mini-batch updates the global model, and adaptive training
//! ([`adaptive`]), where a per-node deep-Q controller ([`deep_q`]) decides
//! between a noise-free local step and a noisy global step. Noise is
//! calibrated from the L2 sensitivity of the update rule ([`privacy`]).
//! [`bounds`] evaluates the convergence guarantees, and [`harness`] runs
//! reproducible experiments over MNIST, Covertype and synthetic data.

pub mod adaptive;
pub mod baseline;
pub mod bounds;
pub mod collaborative;
pub mod data;
pub mod deep_q;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod privacy;
pub mod sampling;

pub use error::{Error, Result};
