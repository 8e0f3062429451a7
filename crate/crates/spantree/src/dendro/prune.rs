//! Pruning spanning-tree states down to reduced dendrograms.
//!
//! Two rewrite rules, applied to a fixpoint:
//!
//! 1. an unoccupied leaf is deleted (its mean integrates to one);
//! 2. an unoccupied pass-through node with edges (k -> j) and (j -> l) is
//!    deleted and the edges fused into (k -> l) (two Gaussian kernel steps
//!    compose into one with summed variance).
//!
//! Neither rule changes the marginal law of the data; unoccupied branching
//! nodes are retained because their removal has no dendrogram expression.
//! Fused edges remember how many original edges they span (`hops`), which
//! scales the composed kernel variance.

use serde::Serialize;

use crate::tree::SpanningTree;

/// A pruned dendrogram. Arrays are indexed by original node id; only
/// entries with `retained[v]` true are meaningful.
#[derive(Debug, Clone, Serialize)]
pub struct ReducedDendrogram {
    pub root: usize,
    pub retained: Vec<bool>,
    /// Parent in the reduced tree (None for the root).
    pub parent: Vec<Option<usize>>,
    /// Number of original edges fused into the edge from the parent.
    pub hops: Vec<u32>,
    /// Occupancy counts carried over from the assignment vector.
    pub counts: Vec<usize>,
}

impl ReducedDendrogram {
    /// Retained node ids in increasing order.
    pub fn nodes(&self) -> Vec<usize> {
        (0..self.retained.len()).filter(|&v| self.retained[v]).collect()
    }

    pub fn node_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    pub fn children_of(&self, v: usize) -> Vec<usize> {
        (0..self.retained.len())
            .filter(|&c| self.retained[c] && self.parent[c] == Some(v))
            .collect()
    }

    /// Depth of every retained node in reduced-tree edges (root at 0).
    pub fn depths(&self) -> Vec<Option<usize>> {
        let m = self.retained.len();
        let mut depths = vec![None; m];
        depths[self.root] = Some(0);
        // Chase parents; the reduced tree is acyclic so this terminates.
        for v in 0..m {
            if !self.retained[v] || depths[v].is_some() {
                continue;
            }
            let mut path = vec![v];
            let mut u = v;
            while depths[u].is_none() {
                u = self.parent[u].expect("non-root retained nodes have parents");
                path.push(u);
            }
            let mut d = depths[u].unwrap();
            for &w in path.iter().rev().skip(1) {
                d += 1;
                depths[w] = Some(d);
            }
        }
        depths
    }

    /// The ancestor of `v` sitting at `depth` on the root path, if `v` is
    /// at that depth or deeper.
    pub fn ancestor_at_depth(&self, v: usize, depth: usize, depths: &[Option<usize>]) -> Option<usize> {
        let mut u = v;
        let mut du = depths[u]?;
        if du < depth {
            return None;
        }
        while du > depth {
            u = self.parent[u]?;
            du -= 1;
        }
        Some(u)
    }

    /// Maximum undirected degree over retained nodes.
    pub fn max_degree(&self) -> usize {
        let m = self.retained.len();
        let mut deg = vec![0usize; m];
        for v in 0..m {
            if !self.retained[v] {
                continue;
            }
            if let Some(p) = self.parent[v] {
                deg[v] += 1;
                deg[p] += 1;
            }
        }
        (0..m).filter(|&v| self.retained[v]).map(|v| deg[v]).max().unwrap_or(0)
    }

    /// Maximum depth in reduced-tree edges.
    pub fn max_depth(&self) -> usize {
        self.depths().iter().flatten().copied().max().unwrap_or(0)
    }

    /// Number of retained nodes without children.
    pub fn leaf_count(&self) -> usize {
        let m = self.retained.len();
        let mut has_child = vec![false; m];
        for v in 0..m {
            if self.retained[v] {
                if let Some(p) = self.parent[v] {
                    has_child[p] = true;
                }
            }
        }
        (0..m).filter(|&v| self.retained[v] && !has_child[v]).count()
    }
}

/// Prunes a full spanning-tree state.
pub fn prune(tree: &SpanningTree, counts: &[usize]) -> ReducedDendrogram {
    let m = tree.node_count();
    assert_eq!(counts.len(), m, "counts must cover every node");
    let present = vec![true; m];
    prune_parent_map(tree.root(), tree.parents(), &present, counts)
}

/// Prunes a dendrogram given as a parent map over a subset of nodes. Used
/// directly by the reversible-jump chain, whose state is already a partial
/// dendrogram.
pub(crate) fn prune_parent_map(
    root: usize,
    parent_in: &[Option<usize>],
    present: &[bool],
    counts: &[usize],
) -> ReducedDendrogram {
    let m = parent_in.len();
    let mut retained = present.to_vec();
    let mut parent: Vec<Option<usize>> = parent_in.to_vec();
    let mut hops: Vec<u32> = (0..m)
        .map(|v| if present[v] && parent_in[v].is_some() { 1 } else { 0 })
        .collect();
    debug_assert!(retained[root]);

    loop {
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
        for v in 0..m {
            if retained[v] {
                if let Some(p) = parent[v] {
                    children[p].push(v);
                }
            }
        }
        let mut changed = false;
        for v in 0..m {
            if !retained[v] || v == root || counts[v] != 0 {
                continue;
            }
            match children[v].len() {
                0 => {
                    retained[v] = false;
                    parent[v] = None;
                    hops[v] = 0;
                    changed = true;
                }
                1 => {
                    let c = children[v][0];
                    let p = parent[v].expect("non-root node has a parent");
                    parent[c] = Some(p);
                    hops[c] += hops[v];
                    retained[v] = false;
                    parent[v] = None;
                    hops[v] = 0;
                    changed = true;
                }
                _ => {}
            }
            if changed {
                break;
            }
        }
        if !changed {
            break;
        }
    }

    ReducedDendrogram { root, retained, parent, hops, counts: counts.to_vec() }
}
