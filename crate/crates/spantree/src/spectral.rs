//! Transient-walk linear systems and normalized-Laplacian diagnostics.
//!
//! Two jobs live here. First, the exit-node distribution of a walk stuck in
//! a visited set U: the probability that the walk's last within-U position
//! before leaving is j equals eta[j] * x[j], where x solves
//! (I - P_UU') x = s0, P_UU is the kernel restricted to U, eta[j] the
//! one-step escape probability from j, and s0 the indicator of the current
//! position. Second, the bottleneck magnitude of a kernel: the
//! second-smallest eigenvalue of the symmetrized normalized Laplacian, whose
//! inverse square root lower-bounds the expected cover time.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BottleneckReport, TransitionKernel, WeightedDigraph};
use crate::storage::WeightMatrix;

/// Largest |U| solved by dense LU; larger systems go through BiCGStab.
pub const DENSE_SOLVE_LIMIT: usize = 512;
/// Largest node count eigensolved densely; larger graphs use Lanczos.
pub const DENSE_EIG_LIMIT: usize = 512;
/// Residual tolerance for transient solves.
pub const SOLVE_TOL: f64 = 1e-12;
/// Negative exit masses above this magnitude indicate solver failure rather
/// than roundoff.
pub const NEGATIVE_CLIP: f64 = -1e-12;
/// Tolerance on the total exit mass before renormalization.
pub const EXIT_MASS_TOL: f64 = 1e-9;
/// Residual tolerance for the Lanczos eigenvalue path.
pub const EIG_TOL: f64 = 1e-10;
/// Lanczos iteration cap.
pub const EIG_ITER_CAP: usize = 2000;
/// Largest |U| the iterative solver will densify on fallback.
const DENSE_FALLBACK_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("transient solve did not converge within {iterations} iterations")]
    SolveNotConverged { iterations: usize },
    #[error("no node of the visited set can leave it in one step")]
    DegenerateExit,
    #[error("eigensolve did not converge within {iterations} iterations")]
    EigenNotConverged { iterations: usize },
    #[error("lambda2 must be positive, got {0}")]
    ZeroLambda2(f64),
    #[error("invalid visited subset: {0}")]
    InvalidSubset(String),
}

/// Kernel restricted to a visited set U, with per-node escape probabilities.
#[derive(Debug, Clone)]
pub struct TransientSystem {
    /// Nodes of U in ascending order; row/column i of `p_uu` is `nodes[i]`.
    pub nodes: Vec<usize>,
    /// Kernel rows restricted to U.
    pub p_uu: WeightMatrix,
    /// One-step escape probability of `nodes[i]`: the kernel mass it sends
    /// outside U, summed directly so it stays accurate below machine
    /// epsilon relative to the within-U mass.
    pub eta: Vec<f64>,
    /// Index into `nodes` of the walk's current position (the unit basis
    /// vector s0).
    pub s0_index: usize,
}

impl TransientSystem {
    /// Restricts `kernel` to the visited set and records the current
    /// position. `visited` must contain `current` and leave at least one
    /// node unvisited with escape mass somewhere in U.
    pub fn from_kernel(
        kernel: &TransitionKernel,
        visited: &[bool],
        current: usize,
    ) -> Result<TransientSystem, SpectralError> {
        let m = kernel.node_count();
        if visited.len() != m {
            return Err(SpectralError::InvalidSubset(format!(
                "visited mask has length {} for {} nodes",
                visited.len(),
                m
            )));
        }
        if !visited[current] {
            return Err(SpectralError::InvalidSubset(format!(
                "current node {current} not in visited set"
            )));
        }
        let nodes: Vec<usize> = (0..m).filter(|&v| visited[v]).collect();
        if nodes.len() == m {
            return Err(SpectralError::InvalidSubset(
                "visited set covers the whole graph".to_string(),
            ));
        }
        let mut index = vec![usize::MAX; m];
        for (i, &v) in nodes.iter().enumerate() {
            index[v] = i;
        }
        let k = nodes.len();
        // eta is accumulated from the unvisited columns directly, never as
        // 1 minus the visited mass: the escape probability may sit below
        // machine epsilon, where the subtraction would cancel it to zero.
        let mut eta = vec![0.0; k];
        let p_uu = if k <= crate::storage::DENSE_NODE_LIMIT {
            let mut sub = DMatrix::zeros(k, k);
            for (i, &v) in nodes.iter().enumerate() {
                for (l, p) in kernel.p.row_iter(v) {
                    if index[l] != usize::MAX {
                        sub[(i, index[l])] = p;
                    } else {
                        eta[i] += p;
                    }
                }
            }
            WeightMatrix::from_dense(sub)
        } else {
            let mut triples = Vec::new();
            for (i, &v) in nodes.iter().enumerate() {
                for (l, p) in kernel.p.row_iter(v) {
                    if index[l] != usize::MAX {
                        triples.push((i, index[l], p));
                    } else {
                        eta[i] += p;
                    }
                }
            }
            WeightMatrix::sparse_from_triples(k, &triples)
        };
        if !eta.iter().any(|&e| e > 0.0) {
            return Err(SpectralError::DegenerateExit);
        }
        let s0_index = index[current];
        Ok(TransientSystem { nodes, p_uu, eta, s0_index })
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

/// Solves (I - P_UU') x = s0. Dense LU up to [`DENSE_SOLVE_LIMIT`] unknowns,
/// BiCGStab beyond, with a dense fallback when the iteration stalls.
pub fn solve_transient(sys: &TransientSystem, tol: f64) -> Result<Vec<f64>, SpectralError> {
    let k = sys.size();
    let mut b = vec![0.0; k];
    b[sys.s0_index] = 1.0;
    if k <= DENSE_SOLVE_LIMIT {
        return solve_dense(sys, &b);
    }
    match bicgstab(sys, &b, tol) {
        Ok(x) => Ok(x),
        Err(_) if k <= DENSE_FALLBACK_LIMIT => solve_dense(sys, &b),
        Err(e) => Err(e),
    }
}

fn solve_dense(sys: &TransientSystem, b: &[f64]) -> Result<Vec<f64>, SpectralError> {
    let k = sys.size();
    let p = sys.p_uu.to_dense();
    let mut a = DMatrix::identity(k, k);
    for r in 0..k {
        for c in 0..k {
            a[(r, c)] -= p[(c, r)];
        }
    }
    let rhs = DVector::from_column_slice(b);
    let lu = a.lu();
    let x = lu
        .solve(&rhs)
        .ok_or(SpectralError::SolveNotConverged { iterations: 0 })?;
    Ok(x.iter().copied().collect())
}

/// out = (I - P') x
fn apply_system(sys: &TransientSystem, x: &[f64], out: &mut [f64]) {
    sys.p_uu.matvec_t(x, out);
    for i in 0..x.len() {
        out[i] = x[i] - out[i];
    }
}

fn bicgstab(sys: &TransientSystem, b: &[f64], tol: f64) -> Result<Vec<f64>, SpectralError> {
    let k = sys.size();
    let cap = 10 * k;
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
    let mut x = vec![0.0; k];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; k];
    let mut p = vec![0.0; k];
    let mut s = vec![0.0; k];
    let mut t = vec![0.0; k];
    for it in 0..cap {
        let rho_new: f64 = r0.iter().zip(&r).map(|(a, b)| a * b).sum();
        if rho_new.abs() < 1e-300 {
            return Err(SpectralError::SolveNotConverged { iterations: it });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..k {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        apply_system(sys, &p, &mut v);
        let r0v: f64 = r0.iter().zip(&v).map(|(a, b)| a * b).sum();
        if r0v.abs() < 1e-300 {
            return Err(SpectralError::SolveNotConverged { iterations: it });
        }
        alpha = rho / r0v;
        for i in 0..k {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if snorm <= tol * bnorm {
            for i in 0..k {
                x[i] += alpha * p[i];
            }
            return Ok(x);
        }
        apply_system(sys, &s, &mut t);
        let tt: f64 = t.iter().map(|v| v * v).sum();
        if tt < 1e-300 {
            return Err(SpectralError::SolveNotConverged { iterations: it });
        }
        omega = t.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / tt;
        for i in 0..k {
            x[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= tol * bnorm {
            return Ok(x);
        }
    }
    Err(SpectralError::SolveNotConverged { iterations: cap })
}

/// Distribution over U of the walk's last within-U position before it first
/// steps outside, given the current position recorded in `sys`. Indexed like
/// `sys.nodes`.
///
/// Small systems go through censored-chain elimination, which keeps full
/// relative accuracy even when escape probabilities sit far below the
/// reach of a direct linear solve. Large systems try the iterative solver
/// first and densify into the elimination only if its exit mass degrades.
pub fn exit_node_distribution(sys: &TransientSystem) -> Result<Vec<f64>, SpectralError> {
    let k = sys.size();
    if k <= DENSE_SOLVE_LIMIT {
        return exit_distribution_censored(sys);
    }
    match exit_via_solve(sys) {
        Ok(p) => Ok(p),
        Err(_) if k <= DENSE_FALLBACK_LIMIT => exit_distribution_censored(sys),
        Err(e) => Err(e),
    }
}

fn exit_via_solve(sys: &TransientSystem) -> Result<Vec<f64>, SpectralError> {
    let x = solve_transient(sys, SOLVE_TOL)?;
    let mut probs: Vec<f64> = x.iter().zip(&sys.eta).map(|(xi, ei)| xi * ei).collect();
    let mut total = 0.0;
    for p in probs.iter_mut() {
        if *p < 0.0 {
            if *p < NEGATIVE_CLIP {
                return Err(SpectralError::SolveNotConverged { iterations: 0 });
            }
            *p = 0.0;
        }
        total += *p;
    }
    if (total - 1.0).abs() > EXIT_MASS_TOL {
        return Err(SpectralError::SolveNotConverged { iterations: 0 });
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok(probs)
}

/// Exit distribution by eliminating the states of U one at a time,
/// redistributing each state's outgoing mass over the survivors and the
/// per-node exit labels (the censored-chain construction). Every update is
/// a sum or product of nonnegative numbers: the elimination never cancels,
/// so exit probabilities keep relative accuracy even when leaving U is an
/// astronomically rare event and (I - P_UU) is numerically singular.
fn exit_distribution_censored(sys: &TransientSystem) -> Result<Vec<f64>, SpectralError> {
    let k = sys.size();
    let mut t = sys.p_uu.to_dense();
    // b[(i, j)]: probability that a walk at i is absorbed recording exit
    // node j, through the states eliminated so far. Initially the one-step
    // exit mass.
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = sys.eta[i];
    }
    // Virtual start row: the walk sits at s0 with probability one.
    let mut start_t = vec![0.0; k];
    start_t[sys.s0_index] = 1.0;
    let mut start_b = vec![0.0; k];
    for dead in 0..k {
        // Total outflow of `dead` toward survivors and exits. Summing the
        // parts directly (instead of 1 - self-loop) is what preserves
        // relative accuracy.
        let mut denom = 0.0;
        for l in (dead + 1)..k {
            denom += t[(dead, l)];
        }
        for l in 0..k {
            denom += b[(dead, l)];
        }
        if denom <= 0.0 {
            // No representable escape from `dead`. Harmless if no mass can
            // reach it any more.
            let reachable = start_t[dead] > 0.0
                || ((dead + 1)..k).any(|i| t[(i, dead)] > 0.0);
            if reachable {
                return Err(SpectralError::DegenerateExit);
            }
            continue;
        }
        let inv = 1.0 / denom;
        for i in (dead + 1)..k {
            let f = t[(i, dead)] * inv;
            if f == 0.0 {
                continue;
            }
            for l in (dead + 1)..k {
                t[(i, l)] += f * t[(dead, l)];
            }
            for l in 0..k {
                b[(i, l)] += f * b[(dead, l)];
            }
            t[(i, dead)] = 0.0;
        }
        let f = start_t[dead] * inv;
        if f > 0.0 {
            for l in (dead + 1)..k {
                start_t[l] += f * t[(dead, l)];
            }
            for l in 0..k {
                start_b[l] += f * b[(dead, l)];
            }
            start_t[dead] = 0.0;
        }
    }
    let total: f64 = start_b.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(SpectralError::DegenerateExit);
    }
    // Exact arithmetic gives total = 1; only rounding drift remains.
    Ok(start_b.iter().map(|p| p / total).collect())
}

/// How [`lambda2`] obtained its eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EigMethod {
    DenseSym,
    Lanczos,
    /// Symmetrized support is disconnected; lambda2 is exactly zero.
    Disconnected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda2: f64,
    pub method: EigMethod,
    pub iterations: usize,
}

/// Second-smallest eigenvalue of the symmetrized normalized Laplacian
/// I - (S + S') / 2 with S = diag(pi)^{1/2} P diag(pi)^{-1/2}. The vector
/// sqrt(pi) always spans the zero eigenspace; lambda2 is zero exactly when
/// the symmetrized support is disconnected.
pub fn lambda2(
    g: &WeightedDigraph,
    kernel: &TransitionKernel,
) -> Result<SpectralResult, SpectralError> {
    let m = g.node_count();
    if !symmetrized_connected(g) {
        return Ok(SpectralResult { lambda2: 0.0, method: EigMethod::Disconnected, iterations: 0 });
    }
    let sqrt_pi: Vec<f64> = kernel.pi.iter().map(|&x| x.sqrt()).collect();
    if m <= DENSE_EIG_LIMIT {
        let mut lap: DMatrix<f64> = DMatrix::identity(m, m);
        for j in 0..m {
            for (l, p) in kernel.p.row_iter(j) {
                let val = 0.5 * p * sqrt_pi[j] / sqrt_pi[l];
                lap[(j, l)] -= val;
                lap[(l, j)] -= val;
            }
        }
        let eig = lap.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let l2 = vals[1].clamp(0.0, 2.0);
        Ok(SpectralResult { lambda2: l2, method: EigMethod::DenseSym, iterations: 0 })
    } else {
        lanczos_lambda2(kernel, &sqrt_pi)
    }
}

fn symmetrized_connected(g: &WeightedDigraph) -> bool {
    let m = g.node_count();
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for (v, _) in g.out_edges(u).chain(g.in_edges(u)) {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == m
}

/// Applies the symmetrized normalized Laplacian without materializing it.
fn lap_matvec(kernel: &TransitionKernel, sqrt_pi: &[f64], x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
    let m = x.len();
    // t1 = diag(s) P diag(1/s) x
    for i in 0..m {
        scratch[i] = x[i] / sqrt_pi[i];
    }
    kernel.p.matvec(scratch, out);
    for i in 0..m {
        out[i] *= sqrt_pi[i];
    }
    // t2 = diag(1/s) P' diag(s) x, accumulated via scratch
    for i in 0..m {
        scratch[i] = x[i] * sqrt_pi[i];
    }
    let mut t2 = vec![0.0; m];
    kernel.p.matvec_t(&scratch, &mut t2);
    for i in 0..m {
        out[i] = x[i] - 0.5 * (out[i] + t2[i] / sqrt_pi[i]);
    }
}

/// Lanczos with full reorthogonalization on the Laplacian, deflating the
/// known zero eigenvector sqrt(pi); returns the smallest Ritz value once its
/// residual estimate drops below [`EIG_TOL`].
fn lanczos_lambda2(
    kernel: &TransitionKernel,
    sqrt_pi: &[f64],
) -> Result<SpectralResult, SpectralError> {
    let m = sqrt_pi.len();
    let unorm = sqrt_pi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = sqrt_pi.iter().map(|v| v / unorm).collect();

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    // Deterministic start vector orthogonal to u.
    let mut v: Vec<f64> = (0..m)
        .map(|i| ((i as f64 * 0.754_877_666 + 0.1).sin()).abs() + 0.01)
        .collect();
    orthogonalize(&mut v, &u);
    normalize(&mut v);

    let mut scratch = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut prev: Option<Vec<f64>> = None;
    for it in 1..=EIG_ITER_CAP.min(m - 1) {
        lap_matvec(kernel, sqrt_pi, &v, &mut scratch, &mut w);
        let alpha: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        for i in 0..m {
            w[i] -= alpha * v[i];
        }
        if let Some(p) = &prev {
            let beta_prev = *betas.last().unwrap();
            for i in 0..m {
                w[i] -= beta_prev * p[i];
            }
        }
        // Full reorthogonalization, including against the deflated vector.
        orthogonalize(&mut w, &u);
        for q in &basis {
            orthogonalize(&mut w, q);
        }
        alphas.push(alpha);
        basis.push(v.clone());

        let beta = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Check convergence of the smallest Ritz pair every few steps.
        if it >= 2 && (it % 4 == 0 || beta < 1e-14 || it == EIG_ITER_CAP.min(m - 1)) {
            let k = alphas.len();
            let mut tri = DMatrix::zeros(k, k);
            for i in 0..k {
                tri[(i, i)] = alphas[i];
                if i + 1 < k {
                    tri[(i, i + 1)] = betas[i];
                    tri[(i + 1, i)] = betas[i];
                }
            }
            let eig = tri.symmetric_eigen();
            let mut best = (f64::INFINITY, 0usize);
            for (idx, &val) in eig.eigenvalues.iter().enumerate() {
                if val < best.0 {
                    best = (val, idx);
                }
            }
            let last_coeff = eig.eigenvectors[(k - 1, best.1)].abs();
            let residual = beta * last_coeff;
            if residual <= EIG_TOL || beta < 1e-14 {
                return Ok(SpectralResult {
                    lambda2: best.0.clamp(0.0, 2.0),
                    method: EigMethod::Lanczos,
                    iterations: it,
                });
            }
        }
        if beta < 1e-14 {
            break;
        }
        betas.push(beta);
        for i in 0..m {
            w[i] /= beta;
        }
        prev = Some(std::mem::replace(&mut v, w.clone()));
    }
    Err(SpectralError::EigenNotConverged { iterations: EIG_ITER_CAP })
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let dot: f64 = v.iter().zip(against).map(|(a, b)| a * b).sum();
    for i in 0..v.len() {
        v[i] -= dot * against[i];
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
}

/// Cover-time lower bound 1/sqrt(lambda2) + m - 2 for a walk started from
/// stationarity.
pub fn cover_time_bound(lambda2: f64, m: usize) -> Result<f64, SpectralError> {
    if lambda2 <= 0.0 {
        return Err(SpectralError::ZeroLambda2(lambda2));
    }
    Ok(1.0 / lambda2.sqrt() + m as f64 - 2.0)
}

/// Assembles the bottleneck diagnostics for a graph, optionally including
/// the escape estimate for a visited set.
pub fn bottleneck_report(
    g: &WeightedDigraph,
    kernel: &TransitionKernel,
    visited: Option<&[bool]>,
) -> Result<BottleneckReport, SpectralError> {
    let spec = lambda2(g, kernel)?;
    let cover = cover_time_bound(spec.lambda2, g.node_count())?;
    Ok(BottleneckReport {
        lambda2: spec.lambda2,
        escape_estimate: visited.map(|v| crate::graph::escape_time_estimate(g, v)),
        cover_bound: cover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_kernel_circulation, validate_dense};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn k3_kernel() -> (WeightedDigraph, TransitionKernel) {
        let g = validate_dense(DMatrix::from_row_slice(3, 3, &[
            0.0, 1.0, 1.0,
            1.0, 0.0, 1.0,
            1.0, 1.0, 0.0,
        ]))
        .unwrap();
        let k = build_kernel_circulation(&g).unwrap();
        (g, k)
    }

    #[test]
    fn k3_exit_distribution_closed_form() {
        // U = {0, 1}, current = 0: P_UU = [[0, 1/2], [1/2, 0]],
        // eta = (1/2, 1/2), (I - P')^{-1} s0 = (4/3, 2/3), so the exit law
        // is (2/3, 1/3).
        let (_, k) = k3_kernel();
        let sys = TransientSystem::from_kernel(&k, &[true, true, false], 0).unwrap();
        assert_eq!(sys.nodes, vec![0, 1]);
        let probs = exit_node_distribution(&sys).unwrap();
        assert!((probs[0] - 2.0 / 3.0).abs() <= 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn exit_distribution_matches_neumann_sum() {
        let (_, k) = k3_kernel();
        let sys = TransientSystem::from_kernel(&k, &[true, true, false], 0).unwrap();
        // Truncated series sum_t (P') ^ t s0.
        let p = sys.p_uu.to_dense();
        let mut s = DVector::from_column_slice(&[1.0, 0.0]);
        let mut acc = s.clone();
        for _ in 0..200 {
            s = p.transpose() * s;
            acc += &s;
        }
        let x = solve_transient(&sys, SOLVE_TOL).unwrap();
        for i in 0..2 {
            assert_relative_eq!(x[i], acc[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn degenerate_exit_detected() {
        // 4-cycle: restrict to {0, 2}: those nodes only reach 1 and 3, which
        // are unvisited, so eta > 0 and things work; instead use a path
        // where the interior is visited and has no way out.
        // Build a graph where node 0's every edge stays in U:
        // 0 -- 1 heavy, 1 -- 2 light. U = {0, 1} leaves eta_1 > 0, so take
        // U = {0} with current 0 on a graph where 0 only touches 1... that
        // always escapes. Degeneracy needs every U node boxed in, which the
        // validator precludes except through zero rows in p_uu; simulate it
        // with an unvalidated graph where U is a sink component.
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 1.0;
        w[(2, 3)] = 1.0;
        w[(3, 2)] = 1.0;
        let g = crate::graph::WeightedDigraph::from_weights_unvalidated(
            crate::storage::WeightMatrix::from_dense(w),
        );
        let d = g.out_weight(0);
        assert_eq!(d, 1.0);
        let p = g.weights().map_entries(|j, _, v| v / g.out_weight(j));
        let k = TransitionKernel {
            p,
            d: (0..4).map(|j| g.out_weight(j)).collect(),
            pi: vec![0.25; 4],
            mode: crate::graph::KernelMode::Circulation,
        };
        let err = TransientSystem::from_kernel(&k, &[true, true, false, false], 0);
        assert!(matches!(err, Err(SpectralError::DegenerateExit)));
    }

    #[test]
    fn k3_lambda2_is_three_halves() {
        let (g, k) = k3_kernel();
        let r = lambda2(&g, &k).unwrap();
        assert_relative_eq!(r.lambda2, 1.5, epsilon = 1e-10);
        assert_eq!(r.method, EigMethod::DenseSym);
    }

    #[test]
    fn disconnected_lambda2_is_zero() {
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
        let g = crate::graph::WeightedDigraph::from_weights_unvalidated(
            crate::storage::WeightMatrix::from_dense(w.clone()),
        );
        let p = w.clone();
        let p = {
            let mut p = p;
            for j in 0..6 {
                let d: f64 = p.row(j).sum();
                for l in 0..6 {
                    p[(j, l)] /= d;
                }
            }
            p
        };
        let k = TransitionKernel {
            p: crate::storage::WeightMatrix::from_dense(p),
            d: (0..6).map(|j| g.out_weight(j)).collect(),
            pi: vec![1.0 / 6.0; 6],
            mode: crate::graph::KernelMode::Circulation,
        };
        let r = lambda2(&g, &k).unwrap();
        assert_eq!(r.lambda2, 0.0);
        assert_eq!(r.method, EigMethod::Disconnected);
        assert!(matches!(
            cover_time_bound(r.lambda2, 6),
            Err(SpectralError::ZeroLambda2(_))
        ));
    }

    #[test]
    fn cover_bound_closed_forms() {
        assert_relative_eq!(cover_time_bound(1.0, 10).unwrap(), 9.0);
        assert_relative_eq!(cover_time_bound(0.25, 2).unwrap(), 2.0);
        assert_relative_eq!(
            cover_time_bound(1.5, 3).unwrap(),
            1.0 / 1.5_f64.sqrt() + 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lambda2_scale_invariant() {
        let (g, k) = k3_kernel();
        let g2 = validate_dense(g.weights().to_dense() * 2.0).unwrap();
        let k2 = build_kernel_circulation(&g2).unwrap();
        let a = lambda2(&g, &k).unwrap().lambda2;
        let b = lambda2(&g2, &k2).unwrap().lambda2;
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn lanczos_agrees_with_dense_on_forced_path() {
        // Weighted ring of 40 nodes: compare the Lanczos path against the
        // dense eigensolve by calling the internal routine directly.
        let n = 40;
        let mut w = DMatrix::zeros(n, n);
        for j in 0..n {
            let nx = (j + 1) % n;
            let wt = 1.0 + (j as f64 * 0.37).sin().abs();
            w[(j, nx)] = wt;
            w[(nx, j)] = wt;
        }
        let g = validate_dense(w).unwrap();
        let k = build_kernel_circulation(&g).unwrap();
        let dense = lambda2(&g, &k).unwrap();
        let sqrt_pi: Vec<f64> = k.pi.iter().map(|&x| x.sqrt()).collect();
        let lcz = lanczos_lambda2(&k, &sqrt_pi).unwrap();
        assert_relative_eq!(dense.lambda2, lcz.lambda2, epsilon = 1e-8);
    }

    #[test]
    fn bicgstab_matches_dense_solve() {
        let (_, k) = k3_kernel();
        let sys = TransientSystem::from_kernel(&k, &[true, true, false], 0).unwrap();
        let dense = solve_dense(&sys, &[1.0, 0.0]).unwrap();
        let iter = bicgstab(&sys, &[1.0, 0.0], 1e-14).unwrap();
        for i in 0..2 {
            assert_relative_eq!(dense[i], iter[i], epsilon = 1e-10);
        }
    }
}
