//! Continuous-time dynamic graph link prediction with uncertainty masked
//! mixup (UmmU) augmentation of intermediate embeddings.
//!
//! The crate is organised bottom-up:
//!
//! - [`numcore`]: matrices, reverse-mode autodiff and seeded sampling
//! - [`tgraph`]: event streams, chronological splits, batching, negatives
//! - [`ummu`]: the augmentation itself and its ablation variants
//! - [`model`]: a memory-based encoder, link decoder and training loop
//! - [`evalmetrics`]: AP / MRR and time-bucketed evaluation
//! - [`synthgen`]: drifting synthetic interaction streams
//! - [`cli`]: configuration, commands and report emission

pub mod cli;
pub mod error;
pub mod evalmetrics;
pub mod model;
pub mod numcore;
pub mod synthgen;
pub mod tgraph;
pub mod ummu;

pub use error::{Error, Result};

/// Version string embedded in every report and checkpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
