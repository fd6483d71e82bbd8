//! Causal structure discovery over decentralized, heterogeneous data.
//!
//! Clients never share raw samples. Each client embeds its columns with
//! shared random feature maps, computes first/second feature moments, and
//! uploads them. The server sums the moments into a [`summary::GlobalSummary`],
//! from which every downstream statistic is computed: conditional
//! independence tests ([`citest`]), direction scores between changing causal
//! modules ([`icp`]), and the full constraint-based search over the augmented
//! graph ([`discovery`]).
//!
//! Heterogeneity across clients is modeled by a surrogate domain-index node
//! appended to the variable set; an edge from the surrogate to an observed
//! variable marks that variable's causal module as changing across domains.

pub mod citest;
pub mod datagen;
pub mod discovery;
pub mod features;
pub mod graph;
pub mod icp;
pub mod metrics;
pub mod summary;

pub(crate) mod seedstream;

use thiserror::Error;

/// Errors shared across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
