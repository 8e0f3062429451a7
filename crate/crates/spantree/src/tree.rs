//! Rooted spanning trees with edges oriented away from the root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::WeightedDigraph;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("node {node}: parent {parent} out of range")]
    ParentOutOfRange { node: usize, parent: usize },
    #[error("root {0} must have no parent")]
    RootHasParent(usize),
    #[error("node {0} has no parent but is not the root")]
    MissingParent(usize),
    #[error("node {0} does not reach the root through parent links")]
    Unrooted(usize),
    #[error("tree edge {from} -> {to} has nonpositive weight in the graph")]
    EdgeNotInGraph { from: usize, to: usize },
}

/// Spanning tree of an m-node graph rooted at `root`; `parent[v]` is the
/// neighbor of v on the path toward the root, `None` exactly at the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanningTree {
    root: usize,
    parent: Vec<Option<usize>>,
}

impl SpanningTree {
    /// Wraps a parent array, checking the rooted-arborescence shape: one
    /// root, everything else reaching it through parent links without
    /// cycles.
    pub fn new(root: usize, parent: Vec<Option<usize>>) -> Result<SpanningTree, TreeError> {
        let m = parent.len();
        if parent[root].is_some() {
            return Err(TreeError::RootHasParent(root));
        }
        for v in 0..m {
            match parent[v] {
                Some(p) if p >= m => return Err(TreeError::ParentOutOfRange { node: v, parent: p }),
                None if v != root => return Err(TreeError::MissingParent(v)),
                _ => {}
            }
        }
        let tree = SpanningTree { root, parent };
        for v in 0..m {
            // Walking up more than m steps means a cycle.
            let mut x = v;
            let mut hops = 0;
            while let Some(p) = tree.parent[x] {
                x = p;
                hops += 1;
                if hops > m {
                    return Err(TreeError::Unrooted(v));
                }
            }
            if x != tree.root {
                return Err(TreeError::Unrooted(v));
            }
        }
        Ok(tree)
    }

    /// Unchecked constructor for samplers whose construction guarantees the
    /// invariants; debug builds still verify.
    pub(crate) fn from_sampler(root: usize, parent: Vec<Option<usize>>) -> SpanningTree {
        debug_assert!(SpanningTree::new(root, parent.clone()).is_ok());
        SpanningTree { root, parent }
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Edges (parent, child), oriented away from the root; m - 1 of them.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (p, v)))
    }

    /// Depth of every node; the root sits at depth 0.
    pub fn depths(&self) -> Vec<usize> {
        let m = self.parent.len();
        let mut depth = vec![usize::MAX; m];
        depth[self.root] = 0;
        for v in 0..m {
            if depth[v] != usize::MAX {
                continue;
            }
            let mut chain = vec![v];
            let mut x = v;
            while let Some(p) = self.parent[x] {
                if depth[p] != usize::MAX {
                    break;
                }
                chain.push(p);
                x = p;
            }
            let mut d = depth[self.parent[x].unwrap_or(self.root)];
            if self.parent[x].is_none() {
                d = 0;
                chain.pop();
            }
            for &node in chain.iter().rev() {
                d += 1;
                depth[node] = d;
            }
        }
        depth
    }

    /// Children lists indexed by node.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.parent.len()];
        for (p, v) in self.edges() {
            ch[p].push(v);
        }
        ch
    }

    /// Ancestor of `v` at the requested depth, or `None` when `v` sits above
    /// that depth.
    pub fn ancestor_at_depth(&self, v: usize, depth: usize, depths: &[usize]) -> Option<usize> {
        if depths[v] < depth {
            return None;
        }
        let mut x = v;
        while depths[x] > depth {
            x = self.parent[x].expect("depth bookkeeping broken");
        }
        Some(x)
    }

    /// Checks every tree edge exists with positive weight in `g` and the
    /// shape invariants hold.
    pub fn validate_against(&self, g: &WeightedDigraph) -> Result<(), TreeError> {
        SpanningTree::new(self.root, self.parent.clone())?;
        for (p, v) in self.edges() {
            if g.weight(p, v) <= 0.0 {
                return Err(TreeError::EdgeNotInGraph { from: p, to: v });
            }
        }
        Ok(())
    }

    /// Canonical identity: the parent array with the root marked -1, e.g.
    /// "-1,0,0". Two trees are equal iff their keys are equal.
    pub fn canonical_key(&self) -> String {
        self.parent
            .iter()
            .map(|p| match p {
                Some(x) => x.to_string(),
                None => "-1".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Compact integer form of the canonical key, cheaper to hash and
    /// compare than the string form.
    pub fn key_vec(&self) -> Vec<i64> {
        self.parent
            .iter()
            .map(|p| p.map(|x| x as i64).unwrap_or(-1))
            .collect()
    }

    /// Re-roots the tree at `new_root` by reversing the parent links along
    /// the path from `new_root` to the old root. Only valid when the
    /// underlying edge set is symmetric in the graph the tree came from.
    pub fn reroot(&self, new_root: usize) -> SpanningTree {
        let mut parent = self.parent.clone();
        let mut path = vec![new_root];
        let mut x = new_root;
        while let Some(p) = parent[x] {
            path.push(p);
            x = p;
        }
        for win in path.windows(2) {
            parent[win[1]] = Some(win[0]);
        }
        parent[new_root] = None;
        SpanningTree { root: new_root, parent }
    }
}
