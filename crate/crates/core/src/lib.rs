//! Spectral graph collaborative filtering with spectrum shift correction.
//!
//! Side information (user–user social graphs, item–item κNN similarity
//! graphs) is placed in the diagonal blocks of the user–item bipartite
//! adjacency. Doing so compresses the normalized spectrum away from −1, so
//! filters designed for `[−1, 1]` are applied to the corrected operator
//! `(Ã₊ − μI) / Δ` instead.
//!
//! Module map:
//! - [`data`]: interaction, social, and feature loaders, splitting, noise injection.
//! - [`sparse`] / [`graph`]: CSR kernels and graph assembly/normalization.
//! - [`spectral`]: power iteration, factor estimation, dense spectrum oracle.
//! - [`filters`]: LightGCN and Jacobi (JGCF band-stop) propagation.
//! - [`train`]: BPR loss, Adam, training loop with early stopping.
//! - [`eval`]: Recall@N / NDCG@N with train-item masking.
//! - [`pipeline`] / [`cli`]: end-to-end orchestration and the `ssc` binary.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod filters;
pub mod graph;
pub mod operator;
pub mod pipeline;
pub mod sparse;
pub mod spectral;
pub mod synthetic;
pub mod train;

pub use error::{Result, SscError};
