//! Noise-resilient unsupervised node representation learning.
//!
//! The pipeline propagates node features over a (kNN-augmented) normalized
//! graph, then fits a per-node latent vector `z_i` together with per-hop
//! two-layer estimators that predict the mean and a scalar standard deviation
//! of every hop's propagated features under a Gaussian likelihood. The learned
//! `Z` is the embedding; the hop-0 standard deviation tracks per-node feature
//! noise intensity.
//!
//! Modules, bottom-up:
//!
//! - [`graph`]: CSR adjacency, symmetric normalization, averaging of graphs.
//! - [`propagation`]: dense feature matrices and multi-hop propagated stacks.
//! - [`augmentation`]: cosine kNN graph and the merged propagation graph.
//! - [`estimator`]: the model, its Gaussian NLL, analytic gradients and Adam.
//! - [`noise`]: feature-noise injection and ground-truth intensity.
//! - [`eval`]: linear probing, correlation reports, hop sweeps.
//! - [`data`]: dataset directories, SBM generation, binary exports.
//! - [`config`] and [`pipeline`]: flat experiment config and the end-to-end run.

pub mod augmentation;
pub mod config;
pub mod data;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod graph;
pub mod noise;
pub mod pipeline;
pub mod propagation;
pub mod rng;

pub use error::{MqeError, Result};
pub use graph::SparseGraph;
pub use propagation::{FeatureSet, PropagatedStack};
