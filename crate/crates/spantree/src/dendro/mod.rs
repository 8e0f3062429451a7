//! Bayesian dendrogram inference with a spanning-tree augmentation.
//!
//! Observations y_i are modeled as draws from Gaussian clusters whose means
//! sit on the nodes of a latent rooted tree; each tree edge (j -> l) ties
//! mu_l to mu_j through a Gaussian kernel with covariance lambda^-1 Sigma.
//! Rather than exploring dendrograms of varying size directly, the model
//! works with a spanning tree over a fixed budget of m nodes and prunes
//! unoccupied structure afterwards, which keeps every Gibbs update a draw
//! from an exact full conditional:
//!
//! * the tree, given everything else, is a product-over-edges spanning tree
//!   law sampled by [`crate::sample::fast_forwarded_cover`];
//! * assignments, mixture weights, and (mu, Sigma) are categorical,
//!   Dirichlet, and normal-inverse-Wishart conditionals.
//!
//! Node 0 is the root throughout, with mu_0 pinned at the origin.
//!
//! [`chains::rj_run`] and [`chains::spr_run`] implement the two baseline
//! samplers used for mixing comparisons: a birth/death reversible-jump
//! chain over directly specified dendrograms, and a subtree-prune-regraft
//! Metropolis chain.

mod chains;
mod diagnostics;
mod model;
mod prune;

pub use chains::{gibbs_run, rj_run, spr_run, RetainedSample};
pub use diagnostics::{
    autocorrelation, ess, similarity_matrix, ChainDiagnostics, TraceDiagnostics,
};
pub use model::{
    update_assignments, update_params, update_tree, update_weights, GibbsState, ModelConfig,
};
pub use prune::{prune, ReducedDendrogram};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DendroError {
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("precision or covariance matrix is not positive definite")]
    PrecisionNotPD,
    #[error("trace has zero variance; effective sample size undefined")]
    ZeroVariance,
    #[error("trace too short for autocorrelation estimation (need >= 10)")]
    TraceTooShort,
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Sample(#[from] crate::sample::SampleError),
}
