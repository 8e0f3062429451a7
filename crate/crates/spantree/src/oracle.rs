//! Ground-truth tree laws and goodness-of-fit tests.
//!
//! Small graphs admit exhaustive enumeration of rooted spanning trees, which
//! pins down the exact sampling law any cover sampler must reproduce. The
//! directed matrix-tree determinant provides an independent check on the
//! normalizing constant, and the chi-squared machinery turns sampled tree
//! frequencies into pass/fail evidence.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::graph::WeightedDigraph;
use crate::tree::SpanningTree;

/// Exhaustive enumeration is quadratic in the tree count; past this size it
/// stops being an oracle and starts being a liability.
pub const ENUM_NODE_LIMIT: usize = 8;
/// Node cap for the matrix-tree determinant.
pub const MATRIX_TREE_NODE_LIMIT: usize = 512;
/// Relative agreement required between determinant and enumeration.
pub const MATRIX_TREE_REL_TOL: f64 = 1e-9;
/// Chi-squared categories with expected count below this are pooled.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("graph with {0} nodes exceeds the enumeration limit of {ENUM_NODE_LIMIT}")]
    TooLarge(usize),
    #[error("graph with {0} nodes exceeds the matrix-tree limit of {MATRIX_TREE_NODE_LIMIT}")]
    TooLargeForDeterminant(usize),
    #[error("in-degree Laplacian minor is singular; support does not span the graph")]
    SingularLaplacian,
    #[error("sampled tree {0} is not in the enumerated law")]
    UnknownTree(String),
    #[error("sample root {sampled} does not match law root {law}")]
    RootMismatch { sampled: usize, law: usize },
    #[error("no samples provided")]
    EmptySample,
    #[error("two-sample test needs matching category counts")]
    CategoryMismatch,
}

/// Exact law of rooted spanning trees: every tree with positive product
/// weight, its probability, and the partition function (the sum of product
/// weights over all trees).
#[derive(Debug, Clone)]
pub struct TreeLaw {
    pub root: usize,
    pub trees: Vec<SpanningTree>,
    pub probs: Vec<f64>,
    pub partition: f64,
    index: HashMap<Vec<i64>, usize>,
}

impl TreeLaw {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Index of a tree in the law, by canonical identity.
    pub fn index_of(&self, tree: &SpanningTree) -> Option<usize> {
        self.index.get(&tree.key_vec()).copied()
    }
}

/// Enumerates every spanning tree rooted at `root` with edges oriented away
/// from the root, weighting each by the product of its edge weights.
/// Exhaustive over parent assignments with incremental cycle pruning.
pub fn enumerate_rooted_trees(
    g: &WeightedDigraph,
    root: usize,
) -> Result<TreeLaw, OracleError> {
    let m = g.node_count();
    if m > ENUM_NODE_LIMIT {
        return Err(OracleError::TooLarge(m));
    }
    let free: Vec<usize> = (0..m).filter(|&v| v != root).collect();
    // In-neighbors (potential parents) of each free node.
    let choices: Vec<Vec<(usize, f64)>> = free
        .iter()
        .map(|&v| g.in_edges(v).filter(|&(u, _)| u != v).collect())
        .collect();

    let mut parent: Vec<Option<usize>> = vec![None; m];
    let mut trees = Vec::new();
    let mut weights = Vec::new();

    fn creates_cycle(parent: &[Option<usize>], child: usize, cand: usize) -> bool {
        let mut x = cand;
        loop {
            if x == child {
                return true;
            }
            match parent[x] {
                Some(p) => x = p,
                None => return false,
            }
        }
    }

    fn recurse(
        free: &[usize],
        choices: &[Vec<(usize, f64)>],
        level: usize,
        acc: f64,
        root: usize,
        parent: &mut Vec<Option<usize>>,
        trees: &mut Vec<SpanningTree>,
        weights: &mut Vec<f64>,
    ) {
        if level == free.len() {
            trees.push(SpanningTree::from_sampler(root, parent.clone()));
            weights.push(acc);
            return;
        }
        let v = free[level];
        for &(u, w) in &choices[level] {
            if creates_cycle(parent, v, u) {
                continue;
            }
            parent[v] = Some(u);
            recurse(free, choices, level + 1, acc * w, root, parent, trees, weights);
            parent[v] = None;
        }
    }

    recurse(&free, &choices, 0, 1.0, root, &mut parent, &mut trees, &mut weights);

    let partition: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / partition).collect();
    let index = trees
        .iter()
        .enumerate()
        .map(|(i, t)| (t.key_vec(), i))
        .collect();
    Ok(TreeLaw { root, trees, probs, partition, index })
}

/// Partition function of the rooted tree law by the directed matrix-tree
/// theorem: the determinant of the in-degree Laplacian with the root's row
/// and column removed. Self-loops never enter a tree and are excluded.
pub fn matrix_tree_partition(g: &WeightedDigraph, root: usize) -> Result<f64, OracleError> {
    let m = g.node_count();
    if m > MATRIX_TREE_NODE_LIMIT {
        return Err(OracleError::TooLargeForDeterminant(m));
    }
    let keep: Vec<usize> = (0..m).filter(|&v| v != root).collect();
    let k = keep.len();
    let mut lap = DMatrix::zeros(k, k);
    let mut col_of = vec![usize::MAX; m];
    for (i, &v) in keep.iter().enumerate() {
        col_of[v] = i;
    }
    for j in 0..m {
        for (l, w) in g.out_edges(j) {
            if l == j {
                continue;
            }
            if col_of[l] != usize::MAX {
                lap[(col_of[l], col_of[l])] += w;
                if col_of[j] != usize::MAX {
                    lap[(col_of[j], col_of[l])] -= w;
                }
            }
        }
    }
    let det: f64 = lap.lu().determinant();
    if !det.is_finite() || det <= 0.0 {
        return Err(OracleError::SingularLaplacian);
    }
    Ok(det)
}

/// Result of a chi-squared comparison, serialized into oracle-check records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofReport {
    /// Sample count.
    pub n: u64,
    pub chi2: f64,
    pub dof: usize,
    pub pvalue: f64,
    /// Total variation distance between empirical and expected frequencies,
    /// over the unpooled categories.
    pub tv: f64,
}

fn chi2_pvalue(chi2: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("dof >= 1");
    dist.sf(chi2)
}

/// Chi-squared goodness of fit of observed category counts against the
/// enumerated law. Categories whose expected count falls below
/// [`MIN_EXPECTED_COUNT`] are pooled into one.
pub fn gof_from_counts(law: &TreeLaw, counts: &[u64]) -> Result<GofReport, OracleError> {
    if counts.len() != law.len() {
        return Err(OracleError::CategoryMismatch);
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(OracleError::EmptySample);
    }
    let nf = n as f64;
    let mut chi2 = 0.0;
    let mut kept = 0usize;
    let mut pooled_obs = 0.0;
    let mut pooled_exp = 0.0;
    let mut tv = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let expected = law.probs[i] * nf;
        let observed = c as f64;
        tv += (observed / nf - law.probs[i]).abs();
        if expected < MIN_EXPECTED_COUNT {
            pooled_obs += observed;
            pooled_exp += expected;
        } else {
            chi2 += (observed - expected).powi(2) / expected;
            kept += 1;
        }
    }
    let mut categories = kept;
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        categories += 1;
    }
    let dof = categories.saturating_sub(1).max(1);
    Ok(GofReport { n, chi2, dof, pvalue: chi2_pvalue(chi2, dof), tv: 0.5 * tv })
}

/// Convenience wrapper over [`gof_from_counts`] that bins sampled trees
/// itself. Fails fast when a sample does not belong to the law.
pub fn gof_test<'a>(
    law: &TreeLaw,
    samples: impl IntoIterator<Item = &'a SpanningTree>,
) -> Result<GofReport, OracleError> {
    let mut counts = vec![0u64; law.len()];
    for t in samples {
        if t.root() != law.root {
            return Err(OracleError::RootMismatch { sampled: t.root(), law: law.root });
        }
        match law.index_of(t) {
            Some(i) => counts[i] += 1,
            None => return Err(OracleError::UnknownTree(t.canonical_key())),
        }
    }
    gof_from_counts(law, &counts)
}

/// Two-sample chi-squared homogeneity test over matched categories: do two
/// samplers draw from the same tree distribution? Categories with combined
/// count below [`MIN_EXPECTED_COUNT`] are pooled.
pub fn two_sample_chi2(counts_a: &[u64], counts_b: &[u64]) -> Result<GofReport, OracleError> {
    if counts_a.len() != counts_b.len() {
        return Err(OracleError::CategoryMismatch);
    }
    let na: u64 = counts_a.iter().sum();
    let nb: u64 = counts_b.iter().sum();
    if na == 0 || nb == 0 {
        return Err(OracleError::EmptySample);
    }
    let (ra, rb) = ((nb as f64 / na as f64).sqrt(), (na as f64 / nb as f64).sqrt());
    let mut chi2 = 0.0;
    let mut kept = 0usize;
    let mut pooled = (0.0, 0.0);
    let mut tv = 0.0;
    for (&a, &b) in counts_a.iter().zip(counts_b) {
        let (a, b) = (a as f64, b as f64);
        tv += (a / na as f64 - b / nb as f64).abs();
        if a + b == 0.0 {
            continue;
        }
        if a + b < MIN_EXPECTED_COUNT {
            pooled.0 += a;
            pooled.1 += b;
        } else {
            chi2 += (ra * a - rb * b).powi(2) / (a + b);
            kept += 1;
        }
    }
    let mut categories = kept;
    if pooled.0 + pooled.1 > 0.0 {
        chi2 += (ra * pooled.0 - rb * pooled.1).powi(2) / (pooled.0 + pooled.1);
        categories += 1;
    }
    let dof = categories.saturating_sub(1).max(1);
    Ok(GofReport {
        n: na + nb,
        chi2,
        dof,
        pvalue: chi2_pvalue(chi2, dof),
        tv: 0.5 * tv,
    })
}
