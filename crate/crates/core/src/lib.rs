//! Structured mean field inference for pairwise discrete Markov random fields.
//!
//! The library optimizes a lower bound on the log partition function of an
//! intractable pairwise model by restricting the variational family to an
//! acyclic subgraph. Kept subgraphs split into two regimes: *v-acyclic*
//! components (every dropped edge bridges two components) admit exact block
//! coordinate updates, while *b-acyclic* components (some dropped edge closes
//! a cycle inside a component) require path-marginal Jacobians computed
//! through auxiliary chain families.
//!
//! Modules:
//! - [`graph`]: undirected graphs, acyclic edge selections, component
//!   classification, tree paths, grid presets.
//! - [`model`]: exponential-family models with indicator potentials,
//!   parameter splitting, the Ising construction.
//! - [`tree`]: exact sum-product on forests, forest entropy, sampling.
//! - [`exact`]: variable elimination and brute-force oracles for the full
//!   (possibly cyclic) model.
//! - [`meanfield`]: the mean-field objective, embedding Jacobians for both
//!   regimes, and the solver.
//! - [`gibbs`]: block Gibbs sampling over the same component decomposition.
//! - [`experiment`]: reproducible CSV benchmark harness.

pub mod exact;
pub mod experiment;
pub mod gibbs;
pub mod graph;
pub mod meanfield;
pub mod model;
pub mod tree;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid subgraph selection: {0}")]
    InvalidSelection(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("vertices {0} and {1} lie in different components; no tree path exists")]
    CrossComponentPath(u32, u32),
    #[error("problem too large: {0}")]
    Intractable(String),
    #[error("block Gibbs requires a v-acyclic selection; component {0} owns a dropped edge")]
    BAcyclicSampler(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
