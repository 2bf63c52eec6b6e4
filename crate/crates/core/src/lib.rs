//! Budgeted construction of pairwise preference datasets.
//!
//! For every instruction a small subset of candidate responses is chosen to
//! be both representative of the pool and mutually diverse, only that subset
//! is judged, and its best and worst responses become a chosen/rejected pair.
//!
//! - [`dataset`]: corpus types and line-record file formats
//! - [`distance`]: pairwise dissimilarities and distance matrices
//! - [`selection`]: the subset objective, exact and greedy solvers, baselines
//! - [`annotation`]: labeling, budget accounting, remote and human judges
//! - [`metrics`]: diversity, representativeness and reward reports
//! - [`pipeline`], [`service`]: orchestration and the annotation HTTP API

pub mod annotation;
pub mod config;
pub mod dataset;
pub mod distance;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod selection;
pub mod service;

pub use error::{Error, Result};

/// FNV-1a; used to derive per-instruction seeds that do not depend on file order.
pub fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
