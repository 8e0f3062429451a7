//! Weighted digraphs and the random-walk transition kernels built from them.
//!
//! A walk on a nonnegative weight matrix W moves from j to l with probability
//! w[j][l] / d[j], where d[j] is the out-weight of j. Two kernel
//! constructions are supported:
//!
//! * **Circulation kernels**: when every node's out-weight equals its
//!   in-weight, the walk's stationary distribution is d / sum(d) in closed
//!   form and rooted spanning trees drawn by cover walks carry probability
//!   proportional to the product of their edge weights.
//! * **General forward kernels**: for an arbitrary strongly connected
//!   nonnegative matrix Q, we first form the reversed auxiliary chain
//!   (column-normalized Q read backwards), find its stationary vector, and
//!   run the forward chain it induces. Cover walks under this kernel again
//!   draw trees with probability proportional to the product of Q entries,
//!   at the price of a per-root correction captured by [`root_distribution`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storage::WeightMatrix;

/// Max-norm tolerance on row sums of a transition matrix.
pub const ROW_STOCHASTIC_TOL: f64 = 1e-12;
/// Max-norm tolerance for stationarity checks pi' P = pi'.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Default relative tolerance for the circulation balance check.
pub const CIRCULATION_TOL: f64 = 1e-9;
/// Residual tolerance for the stationary-vector power iteration.
pub const POWER_ITER_TOL: f64 = 1e-12;
/// Iteration cap for the stationary-vector power iteration.
pub const POWER_ITER_CAP: usize = 1_000_000;
/// Node counts up to this get a dense linear solve as the power-iteration
/// fallback.
pub const STATIONARY_DENSE_FALLBACK_LIMIT: usize = 64;
/// Stationary-vector entries below this are treated as numerically lost.
pub const STATIONARY_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("weight matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("negative weight {value} at ({row}, {col})")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("non-finite weight at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize },
    #[error("node {0} has zero out-weight")]
    ZeroOutDegree(usize),
    #[error("graph is not strongly connected: no path from {from} to {to}")]
    NotStronglyConnected { from: usize, to: usize },
    #[error("weights are not a circulation: node {node} has |out - in| = {imbalance}")]
    NotCirculation { node: usize, imbalance: f64 },
    #[error("stationary distribution did not converge within {iterations} iterations")]
    StationaryNotConverged { iterations: usize },
    #[error("stationary weight at node {node} fell below {STATIONARY_FLOOR:e}")]
    StationaryUnderflow { node: usize },
    #[error("root scores are all zero")]
    AllZeroScores,
    #[error("root score at {0} is negative")]
    NegativeScore(usize),
}

/// Validated nonnegative weight matrix over a strongly connected node set.
#[derive(Debug, Clone)]
pub struct WeightedDigraph {
    w: WeightMatrix,
    out_w: Vec<f64>,
    in_w: Vec<f64>,
    directed: bool,
}

impl WeightedDigraph {
    pub fn node_count(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self, j: usize, l: usize) -> f64 {
        self.w.get(j, l)
    }

    /// Out-edges of `j` as (target, weight), self-loops included.
    pub fn out_edges(&self, j: usize) -> crate::storage::RowIter<'_> {
        self.w.row_iter(j)
    }

    /// In-edges of `l` as (source, weight).
    pub fn in_edges(&self, l: usize) -> crate::storage::ColIter<'_> {
        self.w.col_iter(l)
    }

    /// Total out-weight d[j].
    pub fn out_weight(&self, j: usize) -> f64 {
        self.out_w[j]
    }

    /// Total in-weight (column sum) of `j`.
    pub fn in_weight(&self, j: usize) -> f64 {
        self.in_w[j]
    }

    /// True when the weight matrix is asymmetric.
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.w
    }

    /// Wraps a weight matrix without validation. Diagnostic escape hatch:
    /// spectral routines stay meaningful on disconnected graphs (where
    /// lambda_2 = 0 is exactly the signal wanted), but the samplers and
    /// kernel builders assume [`validate_graph`] has passed.
    pub fn from_weights_unvalidated(w: WeightMatrix) -> WeightedDigraph {
        let out_w = w.row_sums();
        let in_w = w.col_sums();
        let directed = !is_symmetric(&w);
        WeightedDigraph { w, out_w, in_w, directed }
    }
}

fn is_symmetric(w: &WeightMatrix) -> bool {
    let n = w.nrows();
    for r in 0..n {
        for (c, v) in w.row_iter(r) {
            if w.get(c, r) != v {
                return false;
            }
        }
    }
    true
}

/// Checks shape, sign, out-degrees, and strong connectivity of the positive
/// support, then wraps the matrix. The connectivity certificate is a forward
/// and a backward reachability pass from node 0.
pub fn validate_graph(w: WeightMatrix) -> Result<WeightedDigraph, GraphError> {
    let n = w.nrows();
    if let WeightMatrix::Dense(m) = &w {
        if m.nrows() != m.ncols() {
            return Err(GraphError::NonSquare { rows: m.nrows(), cols: m.ncols() });
        }
    }
    if n < 2 {
        return Err(GraphError::TooFewNodes(n));
    }
    for r in 0..n {
        for (c, v) in w.row_iter(r) {
            if !v.is_finite() {
                return Err(GraphError::NonFiniteWeight { row: r, col: c });
            }
            if v < 0.0 {
                return Err(GraphError::NegativeWeight { row: r, col: c, value: v });
            }
        }
    }
    let out_w = w.row_sums();
    if let Some(j) = out_w.iter().position(|&d| d <= 0.0) {
        return Err(GraphError::ZeroOutDegree(j));
    }

    // Everything reachable from 0 and 0 reachable from everything implies
    // strong connectivity of the whole graph.
    let fwd = reach(&w, 0, false);
    if let Some(u) = fwd.iter().position(|&r| !r) {
        return Err(GraphError::NotStronglyConnected { from: 0, to: u });
    }
    let bwd = reach(&w, 0, true);
    if let Some(u) = bwd.iter().position(|&r| !r) {
        return Err(GraphError::NotStronglyConnected { from: u, to: 0 });
    }

    let in_w = w.col_sums();
    let directed = !is_symmetric(&w);
    Ok(WeightedDigraph { w, out_w, in_w, directed })
}

/// Convenience wrapper over [`validate_graph`] for dense input.
pub fn validate_dense(m: DMatrix<f64>) -> Result<WeightedDigraph, GraphError> {
    if m.nrows() != m.ncols() {
        return Err(GraphError::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    validate_graph(WeightMatrix::from_dense(m))
}

fn reach(w: &WeightMatrix, start: usize, reversed: bool) -> Vec<bool> {
    let n = w.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        let push = |seen: &mut Vec<bool>, stack: &mut Vec<usize>, v: usize| {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        };
        if reversed {
            for (v, _) in w.col_iter(u) {
                push(&mut seen, &mut stack, v);
            }
        } else {
            for (v, _) in w.row_iter(u) {
                push(&mut seen, &mut stack, v);
            }
        }
    }
    seen
}

/// True when every node's out-weight matches its in-weight within
/// `tol * max_j d_j` (relative balance).
pub fn check_circulation(g: &WeightedDigraph, tol: f64) -> bool {
    circulation_imbalance(g).1 <= tol * g.out_w.iter().cloned().fold(0.0, f64::max)
}

fn circulation_imbalance(g: &WeightedDigraph) -> (usize, f64) {
    let mut worst = (0, 0.0);
    for j in 0..g.node_count() {
        let gap = (g.out_w[j] - g.in_w[j]).abs();
        if gap > worst.1 {
            worst = (j, gap);
        }
    }
    worst
}

/// Which construction produced a [`TransitionKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMode {
    /// Row-normalized weights with stationary distribution d / sum(d).
    Circulation,
    /// Forward chain induced by the reversed auxiliary chain's stationary
    /// vector.
    GeneralForward,
}

/// Row-stochastic transition matrix with its stationary distribution.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    /// Transition probabilities, row-stochastic within [`ROW_STOCHASTIC_TOL`].
    pub p: WeightMatrix,
    /// Out-weights of the source graph.
    pub d: Vec<f64>,
    /// Stationary distribution of `p`.
    pub pi: Vec<f64>,
    pub mode: KernelMode,
}

impl TransitionKernel {
    pub fn node_count(&self) -> usize {
        self.p.nrows()
    }

    /// Max-norm residual of pi' P - pi'. Zero for an exactly stationary pi.
    pub fn stationarity_residual(&self) -> f64 {
        let n = self.node_count();
        let mut acc = vec![0.0; n];
        for j in 0..n {
            for (l, p) in self.p.row_iter(j) {
                acc[l] += self.pi[j] * p;
            }
        }
        acc.iter()
            .zip(&self.pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Detailed balance holds: pi[j] p[j][l] == pi[l] p[l][j] for all j, l.
    pub fn is_reversible(&self, tol: f64) -> bool {
        let n = self.node_count();
        let mut scale: f64 = 0.0;
        for j in 0..n {
            for (_, p) in self.p.row_iter(j) {
                scale = scale.max(self.pi[j] * p);
            }
        }
        for j in 0..n {
            for (l, p) in self.p.row_iter(j) {
                if (self.pi[j] * p - self.pi[l] * self.p.get(l, j)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

/// Builds the walk kernel for a balanced (circulation) weight matrix:
/// p = diag(d)^-1 W and pi = d / sum(d).
pub fn build_kernel_circulation(g: &WeightedDigraph) -> Result<TransitionKernel, GraphError> {
    if !check_circulation(g, CIRCULATION_TOL) {
        let (node, imbalance) = circulation_imbalance(g);
        return Err(GraphError::NotCirculation { node, imbalance });
    }
    let d = g.out_w.clone();
    let p = g.w.map_entries(|j, _, v| v / d[j]);
    let total: f64 = d.iter().sum();
    let pi = d.iter().map(|&x| x / total).collect();
    Ok(TransitionKernel { p, d, pi, mode: KernelMode::Circulation })
}

/// Builds the forward kernel for an arbitrary strongly connected weight
/// matrix Q. The reversed auxiliary chain moves l -> j with probability
/// q[j][l] / colsum(l); its stationary vector pi* induces the forward chain
/// p[j][l] = q[j][l] * pi*[l] / (colsum(l) * pi*[j]), whose stationary
/// distribution is pi* itself.
pub fn build_kernel_general(g: &WeightedDigraph) -> Result<TransitionKernel, GraphError> {
    let n = g.node_count();
    let col = &g.in_w;
    let pistar = stationary_of_reversed(g)?;
    if let Some(node) = pistar.iter().position(|&x| x < STATIONARY_FLOOR) {
        return Err(GraphError::StationaryUnderflow { node });
    }
    let p = g.w.map_entries(|j, l, v| v * pistar[l] / (col[l] * pistar[j]));
    debug_assert!({
        let sums = p.row_sums();
        sums.iter().all(|s| (s - 1.0).abs() < 1e-9)
    });
    let _ = n;
    Ok(TransitionKernel { p, d: g.out_w.clone(), pi: pistar, mode: KernelMode::GeneralForward })
}

/// Stationary vector of the reversed auxiliary chain, via power iteration on
/// the half-lazy chain (same fixed point, immune to periodicity), with a
/// dense solve fallback for small systems.
fn stationary_of_reversed(g: &WeightedDigraph) -> Result<Vec<f64>, GraphError> {
    let n = g.node_count();
    let col = &g.in_w;
    let mut pi = vec![1.0 / n as f64; n];
    let mut scaled = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..POWER_ITER_CAP {
        // pi_new[j] = sum_l q[j][l] * pi[l] / colsum(l)  (one reversed-chain step)
        for l in 0..n {
            scaled[l] = pi[l] / col[l];
        }
        g.weights().matvec(&scaled, &mut next);
        let residual = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        // Half-lazy update keeps periodic chains convergent.
        let mut total = 0.0;
        for j in 0..n {
            next[j] = 0.5 * next[j] + 0.5 * pi[j];
            total += next[j];
        }
        for x in next.iter_mut() {
            *x /= total;
        }
        std::mem::swap(&mut pi, &mut next);
        if residual <= POWER_ITER_TOL {
            return Ok(pi);
        }
    }
    if n <= STATIONARY_DENSE_FALLBACK_LIMIT {
        return stationary_dense(g);
    }
    Err(GraphError::StationaryNotConverged { iterations: POWER_ITER_CAP })
}

/// Dense solve for the reversed chain's stationary vector: replace one
/// balance equation with the normalization constraint.
fn stationary_dense(g: &WeightedDigraph) -> Result<Vec<f64>, GraphError> {
    let n = g.node_count();
    let col = &g.in_w;
    // a[j][l] = q[j][l] / colsum(l) - delta_jl, last row replaced by ones.
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        for (l, v) in g.weights().row_iter(j) {
            a[(j, l)] += v / col[l];
        }
        a[(j, j)] -= 1.0;
    }
    for l in 0..n {
        a[(n - 1, l)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let lu = a.lu();
    let sol = lu
        .solve(&b)
        .ok_or(GraphError::StationaryNotConverged { iterations: POWER_ITER_CAP })?;
    let mut pi: Vec<f64> = sol.iter().copied().collect();
    let total: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= total;
    }
    if let Some(node) = pi.iter().position(|&x| !(x >= STATIONARY_FLOOR)) {
        return Err(GraphError::StationaryUnderflow { node });
    }
    Ok(pi)
}

/// Distribution over roots such that drawing a root here and then a tree by
/// any of the cover samplers yields the joint law
/// Pr(r, T) proportional to score[r] * prod of tree edge weights.
#[derive(Debug, Clone)]
pub struct RootDistribution {
    pub probs: Vec<f64>,
}

pub fn root_distribution(
    g: &WeightedDigraph,
    kernel: &TransitionKernel,
    root_scores: &[f64],
) -> Result<RootDistribution, GraphError> {
    if let Some(j) = root_scores.iter().position(|&s| s < 0.0) {
        return Err(GraphError::NegativeScore(j));
    }
    let raw: Vec<f64> = match kernel.mode {
        // Per-root tree normalizations are equal, so scores pass through.
        KernelMode::Circulation => root_scores.to_vec(),
        // The per-root normalization is proportional to colsum(r) / pi*[r];
        // dividing it out leaves score[r] * pi*[r] / colsum(r).
        KernelMode::GeneralForward => root_scores
            .iter()
            .enumerate()
            .map(|(r, &s)| s * kernel.pi[r] / g.in_weight(r))
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(GraphError::AllZeroScores);
    }
    Ok(RootDistribution { probs: raw.into_iter().map(|x| x / total).collect() })
}

/// Lower estimate of the expected number of steps a walk needs to leave the
/// visited set U: the worst-case ratio of within-U out-weight to escaping
/// out-weight over nodes of U. Returns +inf when no node of U has an edge
/// out of U.
pub fn escape_time_estimate(g: &WeightedDigraph, visited: &[bool]) -> f64 {
    let mut best = f64::INFINITY;
    for j in 0..g.node_count() {
        if !visited[j] {
            continue;
        }
        let mut inside = 0.0;
        let mut outside = 0.0;
        for (l, v) in g.out_edges(j) {
            if visited[l] {
                inside += v;
            } else {
                outside += v;
            }
        }
        let ratio = if outside > 0.0 { inside / outside } else { f64::INFINITY };
        if ratio < best {
            best = ratio;
        }
    }
    best
}

/// Bundle of bottleneck diagnostics for one graph; assembled by
/// [`crate::spectral::bottleneck_report`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BottleneckReport {
    /// Second-smallest eigenvalue of the normalized Laplacian.
    pub lambda2: f64,
    /// Escape-time estimate for a supplied visited set, if one was given.
    pub escape_estimate: Option<f64>,
    /// Cover-time lower bound 1/sqrt(lambda2) + m - 2.
    pub cover_bound: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn k3() -> WeightedDigraph {
        validate_dense(DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 1.0,
            1.0, 0.0, 1.0,
            1.0, 1.0, 0.0,
        ]))
        .unwrap()
    }

    fn path3() -> WeightedDigraph {
        validate_dense(DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            1.0, 0.0, 1.0,
            0.0, 1.0, 0.0,
        ]))
        .unwrap()
    }

    fn directed_cycle3() -> WeightedDigraph {
        validate_dense(DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
            1.0, 0.0, 0.0,
        ]))
        .unwrap()
    }

    fn general_q3() -> WeightedDigraph {
        validate_dense(DMatrix::from_row_slice(3, 3, &[
            0.0, 2.0, 1.0,
            1.0, 0.0, 1.0,
            1.0, 1.0, 0.0,
        ]))
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_input() {
        let nonsquare = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(validate_dense(nonsquare), Err(GraphError::NonSquare { .. })));

        let negative = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(matches!(
            validate_dense(negative),
            Err(GraphError::NegativeWeight { row: 0, col: 1, .. })
        ));

        let zero_row = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(validate_dense(zero_row), Err(GraphError::ZeroOutDegree(0))));

        // 0 -> 1 only: nothing comes back.
        let one_way = DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 0.0,
            1.0, 0.0, 1.0,
            0.0, 0.0, 1.0,
        ]);
        assert!(matches!(
            validate_dense(one_way),
            Err(GraphError::NotStronglyConnected { .. })
        ));
    }

    #[test]
    fn directed_flag_tracks_symmetry() {
        assert!(!k3().is_directed());
        assert!(directed_cycle3().is_directed());
    }

    #[test]
    fn circulation_check() {
        assert!(check_circulation(&k3(), CIRCULATION_TOL));
        // A directed cycle balances too.
        assert!(check_circulation(&directed_cycle3(), CIRCULATION_TOL));
        assert!(!check_circulation(&general_q3(), CIRCULATION_TOL));
    }

    #[test]
    fn path_kernel_matches_closed_form() {
        let g = path3();
        let k = build_kernel_circulation(&g).unwrap();
        assert_relative_eq!(k.pi[0], 0.25);
        assert_relative_eq!(k.pi[1], 0.5);
        assert_relative_eq!(k.pi[2], 0.25);
        assert!(k.stationarity_residual() <= STATIONARY_TOL);
    }

    #[test]
    fn kernel_rows_are_stochastic() {
        for g in [k3(), path3(), directed_cycle3()] {
            let k = build_kernel_circulation(&g).unwrap();
            for s in k.p.row_sums() {
                assert!((s - 1.0).abs() <= ROW_STOCHASTIC_TOL);
            }
        }
        let k = build_kernel_general(&general_q3()).unwrap();
        for s in k.p.row_sums() {
            assert!((s - 1.0).abs() <= ROW_STOCHASTIC_TOL);
        }
    }

    #[test]
    fn general_kernel_is_stationary() {
        let k = build_kernel_general(&general_q3()).unwrap();
        assert!(k.stationarity_residual() <= STATIONARY_TOL);
    }

    #[test]
    fn reversed_cycle_forward_chain() {
        // On the directed 3-cycle the reversed chain walks the opposite
        // cycle; its stationary vector is uniform and the forward chain
        // reproduces the original cycle.
        let g = directed_cycle3();
        let k = build_kernel_general(&g).unwrap();
        for j in 0..3 {
            assert_relative_eq!(k.pi[j], 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_relative_eq!(k.p.get(0, 1), 1.0, epsilon = 1e-12);
        assert_relative_eq!(k.p.get(1, 2), 1.0, epsilon = 1e-12);
        assert_relative_eq!(k.p.get(2, 0), 1.0, epsilon = 1e-12);
        assert!(k.stationarity_residual() <= STATIONARY_TOL);
    }

    #[test]
    fn builders_agree_on_circulation_graphs() {
        for g in [k3(), path3(), directed_cycle3()] {
            let a = build_kernel_circulation(&g).unwrap();
            let b = build_kernel_general(&g).unwrap();
            let n = g.node_count();
            for j in 0..n {
                assert!((a.pi[j] - b.pi[j]).abs() <= STATIONARY_TOL);
                for l in 0..n {
                    assert!((a.p.get(j, l) - b.p.get(j, l)).abs() <= STATIONARY_TOL);
                }
            }
        }
    }

    #[test]
    fn circulation_builder_rejects_unbalanced() {
        assert!(matches!(
            build_kernel_circulation(&general_q3()),
            Err(GraphError::NotCirculation { .. })
        ));
    }

    #[test]
    fn root_scores_validate() {
        let g = k3();
        let k = build_kernel_circulation(&g).unwrap();
        assert!(matches!(
            root_distribution(&g, &k, &[0.0, 0.0, 0.0]),
            Err(GraphError::AllZeroScores)
        ));
        assert!(matches!(
            root_distribution(&g, &k, &[1.0, -1.0, 0.0]),
            Err(GraphError::NegativeScore(1))
        ));
        let rd = root_distribution(&g, &k, &[2.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(rd.probs[0], 0.5);
    }

    #[test]
    fn escape_estimate_on_k3() {
        let g = k3();
        // U = {0}: no within-U weight.
        assert_eq!(escape_time_estimate(&g, &[true, false, false]), 0.0);
        // U = {0, 1}: each node has 1 inside, 1 outside.
        assert_eq!(escape_time_estimate(&g, &[true, true, false]), 1.0);
    }

    #[test]
    fn escape_estimate_bridged_cliques() {
        // Two triangles joined by a single weight-0.1 bridge between nodes 2
        // and 3. With U = the first triangle, node 2 has 2.0 inside against
        // 0.1 outside.
        let mut w = DMatrix::zeros(6, 6);
        for block in [[0usize, 1, 2], [3, 4, 5]] {
            for &a in &block {
                for &b in &block {
                    if a != b {
                        w[(a, b)] = 1.0;
                    }
                }
            }
        }
        w[(2, 3)] = 0.1;
        w[(3, 2)] = 0.1;
        let g = validate_dense(w).unwrap();
        let visited = [true, true, true, false, false, false];
        assert_relative_eq!(escape_time_estimate(&g, &visited), 2.0 / 0.1, epsilon = 1e-12);
    }

    #[test]
    fn escape_estimate_no_exit_is_infinite() {
        // Disconnected support is rejected by validation, so exercise the
        // +inf contract through the unvalidated constructor.
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 3)] = 1.0;
        w[(3, 2)] = 1.0;
        let g = WeightedDigraph::from_weights_unvalidated(WeightMatrix::from_dense(w));
        assert!(escape_time_estimate(&g, &[true, true, false, false]).is_infinite());
    }

    #[test]
    fn escape_estimate_scale_invariant() {
        let g = k3();
        let scaled = validate_dense(g.weights().to_dense() * 7.5).unwrap();
        let visited = [true, true, false];
        assert_relative_eq!(
            escape_time_estimate(&g, &visited),
            escape_time_estimate(&scaled, &visited),
            epsilon = 1e-12
        );
    }

    #[test]
    fn sparse_storage_round_trip() {
        // Ring with chords, forced through the CSR path.
        let n = 50;
        let mut triples = Vec::new();
        for j in 0..n {
            let nxt = (j + 1) % n;
            triples.push((j, nxt, 1.0));
            triples.push((nxt, j, 1.0));
            let chord = (j + 7) % n;
            triples.push((j, chord, 0.5));
            triples.push((chord, j, 0.5));
        }
        let g = validate_graph(WeightMatrix::sparse_from_triples(n, &triples)).unwrap();
        assert!(!g.weights().is_dense());
        let k = build_kernel_circulation(&g).unwrap();
        assert!(k.stationarity_residual() <= STATIONARY_TOL);
        let kg = build_kernel_general(&g).unwrap();
        for j in 0..n {
            assert!((k.pi[j] - kg.pi[j]).abs() <= STATIONARY_TOL);
        }
    }
}
