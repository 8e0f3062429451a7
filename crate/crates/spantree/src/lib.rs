//! Exact sampling of rooted spanning trees from random-walk cover
//! algorithms, with spectral diagnostics for bottlenecked graphs and a
//! spanning-tree-augmented dendrogram Gibbs sampler built on top.
//!
//! The core entry points:
//!
//! * [`graph::validate_graph`] / [`graph::build_kernel_circulation`] /
//!   [`graph::build_kernel_general`] turn a nonnegative weight matrix into a
//!   walk kernel whose cover trees carry probability proportional to the
//!   product of their edge weights.
//! * [`sample::fast_forwarded_cover`] draws exact trees while skipping the
//!   long excursions a plain cover walk wastes inside already-visited
//!   regions; [`sample::aldous_broder`], [`sample::wilson`], and
//!   [`sample::laplacian_sampler`] are the reference baselines.
//! * [`oracle`] enumerates small-graph tree laws and runs goodness-of-fit
//!   checks so every sampler can be validated against ground truth.
//! * [`dendro`] fits latent tree-structured Gaussian mixtures (dendrograms)
//!   by Gibbs sampling, using the fast-forwarded walk for its tree updates.
//! * [`bench`] generates the two-block and K-block experiment graphs and
//!   records sampler work in JSON-lines form.

#![forbid(unsafe_code)]

pub mod bench;
pub mod data_io;
pub mod dendro;
pub mod graph;
pub mod graph_io;
pub mod oracle;
pub mod sample;
pub mod spectral;
pub mod storage;
pub mod tree;

pub use graph::{
    build_kernel_circulation, build_kernel_general, check_circulation, escape_time_estimate,
    root_distribution, validate_dense, validate_graph, BottleneckReport, GraphError, KernelMode,
    RootDistribution, TransitionKernel, WeightedDigraph,
};
pub use sample::{
    aldous_broder, exit_edge_sample, fast_forwarded_cover, laplacian_sampler, sample_rooted_tree,
    wilson, Algo, KappaPolicy, SampleError, SampleStats, VisitFrontier,
};
pub use spectral::{
    bottleneck_report, cover_time_bound, exit_node_distribution, lambda2, solve_transient,
    SpectralError, SpectralResult, TransientSystem,
};
pub use tree::{SpanningTree, TreeError};
