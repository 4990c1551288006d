//! Few-shot, multi-label intent-to-app classification.
//!
//! An utterance describing a task (an HLI, "high-level intent") is mapped
//! to the set of apps needed to carry it out. The crate provides:
//!
//! - [`corpus`]: the labelled corpus, its file format, splits, statistics
//!   and a synthetic generator.
//! - [`embedding`]: tokenisation and mean-pooled word-vector sentence
//!   encoding.
//! - [`numerics`]: dense kernels, losses, Adam, gradient checking and
//!   parameter checkpoints.
//! - [`baselines`]: majority ranking, the seen-label oracle bound, the
//!   nearest-neighbour app-profile model and a feedforward network.
//! - [`memnet`]: the query-augmentation memory network.
//! - [`matchnet`]: matching networks and the memory/matching hybrid.
//! - [`trainer`]: episodic training with early stopping and restarts.
//! - [`eval`]: purity/coverage at top-n and the one-shot unseen-label
//!   protocol.

pub mod baselines;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod matchnet;
pub mod memnet;
pub mod model;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
