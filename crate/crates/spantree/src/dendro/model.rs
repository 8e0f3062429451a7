//! Model configuration, Gibbs state, and the four full-conditional updates.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};

use crate::graph::{build_kernel_circulation, validate_dense};
use crate::sample::{fast_forwarded_cover, KappaPolicy};
use crate::tree::SpanningTree;

use super::DendroError;

/// Shifted log edge weights below this are clamped before exponentiation.
/// The clamp keeps the tree-update graph strictly positive (hence strongly
/// connected) while leaving the fast-forward linear solves comfortably
/// inside f64 range; trees whose relative probability is below e^-400 are
/// unobservable at any realistic sample size.
const LOG_WEIGHT_FLOOR: f64 = -400.0;

/// Tiny positive floor for Dirichlet components, guarding against gamma
/// draws that underflow to zero at very small concentration.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Node budget of the latent spanning tree.
    pub m_tilde: usize,
    /// Precision scale of the edge kernel: mu_l ~ N(mu_j, lambda^-1 Sigma).
    pub lambda: f64,
    /// Inverse-Wishart degrees of freedom of the Sigma prior.
    pub nu: f64,
    /// Inverse-Wishart scale matrix of the Sigma prior.
    pub sigma0: DMatrix<f64>,
    /// Symmetric Dirichlet concentration for the mixture weights.
    pub alpha_dir: f64,
    /// Fast-forward policy for the tree update.
    pub kappa: KappaPolicy,
}

impl ModelConfig {
    /// Paper defaults: m = floor(n/4) (at least 2), lambda 0.25, nu = n,
    /// Sigma0 = 0.2^2 I, alpha 0.1.
    pub fn defaults_for(n: usize, d: usize) -> ModelConfig {
        ModelConfig {
            m_tilde: (n / 4).max(2),
            lambda: 0.25,
            nu: n as f64,
            sigma0: DMatrix::identity(d, d) * 0.04,
            alpha_dir: 0.1,
            kappa: KappaPolicy::default(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<(), DendroError> {
        if self.m_tilde < 2 {
            return Err(DendroError::BadConfig("node budget must be >= 2".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(DendroError::BadConfig("lambda must be positive".into()));
        }
        if !(self.nu > d as f64 - 1.0) {
            return Err(DendroError::BadConfig(format!(
                "inverse-Wishart dof must exceed d - 1 = {}",
                d - 1
            )));
        }
        if self.sigma0.nrows() != d || self.sigma0.ncols() != d {
            return Err(DendroError::BadConfig("sigma0 shape must match data".into()));
        }
        if (&self.sigma0 - self.sigma0.transpose()).abs().max() > 1e-12 {
            return Err(DendroError::BadConfig("sigma0 must be symmetric".into()));
        }
        if Cholesky::new(self.sigma0.clone()).is_none() {
            return Err(DendroError::BadConfig("sigma0 must be positive definite".into()));
        }
        if !(self.alpha_dir > 0.0) {
            return Err(DendroError::BadConfig("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// Full sampler state. Node 0 is the root; mu row 0 stays pinned at zero.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub tree: SpanningTree,
    pub z: Vec<usize>,
    /// m x d node means.
    pub mu: DMatrix<f64>,
    /// d x d shared cluster covariance.
    pub sigma: DMatrix<f64>,
    /// Length-m mixture weights.
    pub weights: Vec<f64>,
}

impl GibbsState {
    /// Deterministic cold start: path tree 0 -> 1 -> ... -> m-1, all means
    /// at the origin, prior covariance, uniform weights, everything in
    /// cluster 0. The first sweep immediately redraws all of it.
    pub fn init(n: usize, d: usize, cfg: &ModelConfig) -> GibbsState {
        let m = cfg.m_tilde;
        let parents: Vec<Option<usize>> =
            (0..m).map(|v| if v == 0 { None } else { Some(v - 1) }).collect();
        GibbsState {
            tree: SpanningTree::new(0, parents).expect("path tree is valid"),
            z: vec![0; n],
            mu: DMatrix::zeros(m, d),
            sigma: cfg.sigma0.clone(),
            weights: vec![1.0 / m as f64; m],
        }
    }
}

/// Per-node occupancy counts of an assignment vector.
pub(crate) fn occupancy(z: &[usize], m: usize) -> Vec<usize> {
    let mut counts = vec![0usize; m];
    for &zi in z {
        counts[zi] += 1;
    }
    counts
}

/// Per-node data sums (m x d).
pub(crate) fn cluster_sums(data: &DMatrix<f64>, z: &[usize], m: usize) -> DMatrix<f64> {
    let d = data.ncols();
    let mut sums = DMatrix::zeros(m, d);
    for (i, &zi) in z.iter().enumerate() {
        for c in 0..d {
            sums[(zi, c)] += data[(i, c)];
        }
    }
    sums
}

/// Complete graph over the nodes with w_{j,l} = Gaussian kernel density of
/// mu_l around mu_j at covariance lambda^-1 Sigma, computed in log space
/// and shifted by the global maximum before exponentiation. Per-edge
/// constants cancel in a product over exactly m-1 edges, and a global shift
/// rescales every tree's weight equally, so the tree law is untouched.
pub(crate) fn gaussian_edge_graph(
    mu: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
) -> Result<crate::graph::WeightedDigraph, DendroError> {
    let m = mu.nrows();
    let chol = Cholesky::new(sigma.clone()).ok_or(DendroError::PrecisionNotPD)?;
    let mut logs = DMatrix::from_element(m, m, f64::NEG_INFINITY);
    let mut max_log = f64::NEG_INFINITY;
    for j in 0..m {
        for l in (j + 1)..m {
            let delta = (mu.row(j) - mu.row(l)).transpose();
            let solved = chol.solve(&delta);
            let q = delta.dot(&solved);
            let lw = -0.5 * lambda * q;
            logs[(j, l)] = lw;
            logs[(l, j)] = lw;
            if lw > max_log {
                max_log = lw;
            }
        }
    }
    let mut w = DMatrix::zeros(m, m);
    for j in 0..m {
        for l in 0..m {
            if j != l {
                w[(j, l)] = (logs[(j, l)] - max_log).max(LOG_WEIGHT_FLOOR).exp();
            }
        }
    }
    Ok(validate_dense(w)?)
}

/// Draws the spanning tree from its full conditional, a product-over-edges
/// law with Gaussian kernel edge weights rooted at node 0.
pub fn update_tree<R: Rng>(
    state: &GibbsState,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<SpanningTree, DendroError> {
    let g = gaussian_edge_graph(&state.mu, &state.sigma, cfg.lambda)?;
    // Symmetric weights: the circulation kernel applies and the undirected
    // tree law does not depend on the root, so sampling rooted at 0
    // directly gives the conditional.
    let kernel = build_kernel_circulation(&g)?;
    let (tree, _) = fast_forwarded_cover(&kernel, 0, cfg.kappa, rng)?;
    Ok(tree)
}

/// Unnormalized log assignment probabilities for one observation:
/// log weight_k - (y - mu_k)' Sigma^-1 (y - mu_k) / 2.
pub(crate) fn assignment_logprobs(
    y: &DVector<f64>,
    mu: &DMatrix<f64>,
    sigma_chol: &Cholesky<f64, nalgebra::Dyn>,
    weights: &[f64],
) -> Vec<f64> {
    let m = mu.nrows();
    let mut logs = Vec::with_capacity(m);
    for k in 0..m {
        let delta = y - mu.row(k).transpose();
        let q = delta.dot(&sigma_chol.solve(&delta));
        let lw = if weights[k] > 0.0 { weights[k].ln() } else { f64::NEG_INFINITY };
        logs.push(lw - 0.5 * q);
    }
    logs
}

pub(crate) fn categorical_from_logs<R: Rng>(logs: &[f64], rng: &mut R) -> usize {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

/// Draws every z_i from its categorical full conditional
/// Pr(z_i = k) proportional to weight_k phi(y_i; mu_k, Sigma).
pub fn update_assignments<R: Rng>(
    state: &GibbsState,
    data: &DMatrix<f64>,
    rng: &mut R,
) -> Vec<usize> {
    let chol = Cholesky::new(state.sigma.clone())
        .expect("state covariance stays positive definite");
    let mut z = Vec::with_capacity(data.nrows());
    for i in 0..data.nrows() {
        let y = data.row(i).transpose();
        let logs = assignment_logprobs(&y, &state.mu, &chol, &state.weights);
        z.push(categorical_from_logs(&logs, rng));
    }
    z
}

/// Draws mixture weights from Dirichlet(alpha + n_1, ..., alpha + n_m).
pub fn update_weights<R: Rng>(z: &[usize], cfg: &ModelConfig, rng: &mut R) -> Vec<f64> {
    let counts = occupancy(z, cfg.m_tilde);
    let mut draws = Vec::with_capacity(cfg.m_tilde);
    let mut total = 0.0;
    for &c in &counts {
        let shape = cfg.alpha_dir + c as f64;
        let g = Gamma::new(shape, 1.0).expect("positive shape");
        let v: f64 = g.sample(rng).max(WEIGHT_FLOOR);
        draws.push(v);
        total += v;
    }
    for v in draws.iter_mut() {
        *v /= total;
    }
    draws
}

/// Inverse-Wishart draw by the Bartlett decomposition of the corresponding
/// Wishart on the precision.
pub(crate) fn inverse_wishart<R: Rng>(
    dof: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>, DendroError> {
    let d = scale.nrows();
    let scale_inv = Cholesky::new(scale.clone())
        .ok_or(DendroError::PrecisionNotPD)?
        .inverse();
    let l = Cholesky::new(scale_inv).ok_or(DendroError::PrecisionNotPD)?.unpack();
    let mut bart = DMatrix::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(dof - i as f64)
            .map_err(|_| DendroError::BadConfig("inverse-Wishart dof too small".into()))?;
        bart[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            bart[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let la = l * bart;
    let w = &la * la.transpose();
    let mut sigma = Cholesky::new(w).ok_or(DendroError::PrecisionNotPD)?.inverse();
    // Re-symmetrize against accumulated round-off.
    sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(sigma)
}

/// Row precision of the free means given Sigma: lambda times the tree
/// Laplacian over nodes 1..m (edges touching the pinned root contribute
/// only their free endpoint's diagonal) plus the occupancy diagonal.
pub(crate) fn mean_precision(
    tree: &SpanningTree,
    counts: &[usize],
    lambda: f64,
) -> DMatrix<f64> {
    let m = counts.len();
    let mut a = DMatrix::zeros(m - 1, m - 1);
    for (j, l) in tree.edges() {
        match (j, l) {
            (0, l) => a[(l - 1, l - 1)] += lambda,
            (j, 0) => a[(j - 1, j - 1)] += lambda,
            (j, l) => {
                a[(j - 1, j - 1)] += lambda;
                a[(l - 1, l - 1)] += lambda;
                a[(j - 1, l - 1)] -= lambda;
                a[(l - 1, j - 1)] -= lambda;
            }
        }
    }
    for k in 1..m {
        a[(k - 1, k - 1)] += counts[k] as f64;
    }
    a
}

/// Conditional draw Sigma | mu, z: inverse-Wishart with dof
/// nu + n + (m-1) and scale Sigma0 + data residuals + lambda * edge
/// residuals.
pub(crate) fn draw_sigma_given_mu<R: Rng>(
    state: &GibbsState,
    data: &DMatrix<f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>, DendroError> {
    let n = data.nrows();
    let m = cfg.m_tilde;
    let mut scale = cfg.sigma0.clone();
    for i in 0..n {
        let delta = (data.row(i) - state.mu.row(state.z[i])).transpose();
        scale += &delta * delta.transpose();
    }
    for (j, l) in state.tree.edges() {
        let delta = (state.mu.row(l) - state.mu.row(j)).transpose();
        scale += (&delta * delta.transpose()) * cfg.lambda;
    }
    let dof = cfg.nu + n as f64 + (m - 1) as f64;
    inverse_wishart(dof, &scale, rng)
}

/// Matrix normal draw with row precision `a` and column covariance `sigma`:
/// mean A^-1 c, then U = M + L_A^-T E L_Sigma^T, which yields row
/// covariance A^-1 and column covariance Sigma.
pub(crate) fn draw_matrix_normal<R: Rng>(
    a: DMatrix<f64>,
    c: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>, DendroError> {
    let k = a.nrows();
    let d = sigma.nrows();
    let chol_a = Cholesky::new(a).ok_or(DendroError::PrecisionNotPD)?;
    let mean = chol_a.solve(c);
    let mut e = DMatrix::zeros(k, d);
    for r in 0..k {
        for col in 0..d {
            e[(r, col)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let l_sigma = Cholesky::new(sigma.clone()).ok_or(DendroError::PrecisionNotPD)?.unpack();
    let noise = chol_a
        .l()
        .transpose()
        .solve_upper_triangular(&e)
        .ok_or(DendroError::PrecisionNotPD)?;
    Ok(mean + noise * l_sigma.transpose())
}

/// Conditional draw of the free means given Sigma: matrix normal with mean
/// A^-1 C, row covariance A^-1, column covariance Sigma, where C stacks
/// n_k ybar_k over free nodes.
pub(crate) fn draw_mu_given_sigma<R: Rng>(
    tree: &SpanningTree,
    counts: &[usize],
    sums: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<DMatrix<f64>, DendroError> {
    let m = cfg.m_tilde;
    let d = sums.ncols();
    let a = mean_precision(tree, counts, cfg.lambda);
    let c = sums.rows(1, m - 1).into_owned();
    let free = draw_matrix_normal(a, &c, sigma, rng)?;
    let mut mu = DMatrix::zeros(m, d);
    for r in 0..m - 1 {
        for col in 0..d {
            mu[(r + 1, col)] = free[(r, col)];
        }
    }
    Ok(mu)
}

/// Updates (mu, Sigma) by two exact conditional draws: Sigma | mu from an
/// inverse-Wishart, then mu | Sigma from a matrix normal. Both conditionals
/// are proportional to the joint density (see the pointwise identity tests
/// below), so the pair is a valid Gibbs scan for the block.
pub fn update_params<R: Rng>(
    state: &GibbsState,
    data: &DMatrix<f64>,
    cfg: &ModelConfig,
    rng: &mut R,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DendroError> {
    let sigma = draw_sigma_given_mu(state, data, cfg, rng)?;
    let counts = occupancy(&state.z, cfg.m_tilde);
    let sums = cluster_sums(data, &state.z, cfg.m_tilde);
    let mu = draw_mu_given_sigma(&state.tree, &counts, &sums, &sigma, cfg, rng)?;
    Ok((mu, sigma))
}

/// The (mu, Sigma)-dependent part of the joint log density
/// L(y | mu, z, Sigma) * Pi(mu | T, Sigma) * IW(Sigma; nu, Sigma0),
/// up to an additive constant free of mu and Sigma.
#[cfg(test)]
pub(crate) fn log_joint_mu_sigma(
    tree: &SpanningTree,
    z: &[usize],
    mu: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    data: &DMatrix<f64>,
    cfg: &ModelConfig,
) -> f64 {
    let n = data.nrows();
    let m = cfg.m_tilde;
    let d = data.ncols();
    let chol = Cholesky::new(sigma.clone()).expect("positive definite sigma");
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let mut quad = 0.0;
    for i in 0..n {
        let delta = (data.row(i) - mu.row(z[i])).transpose();
        quad += delta.dot(&chol.solve(&delta));
    }
    for (j, l) in tree.edges() {
        let delta = (mu.row(l) - mu.row(j)).transpose();
        quad += cfg.lambda * delta.dot(&chol.solve(&delta));
    }
    // tr(Sigma0 Sigma^-1)
    for col in 0..d {
        let s0col = cfg.sigma0.column(col).into_owned();
        quad += chol.solve(&s0col)[col] * 1.0;
    }
    let coeff = n as f64 + (m - 1) as f64 + cfg.nu + d as f64 + 1.0;
    -0.5 * (coeff * logdet + quad)
}

/// Inverse-Wishart log density in Sigma, up to a constant in Sigma.
#[cfg(test)]
pub(crate) fn log_inverse_wishart(sigma: &DMatrix<f64>, dof: f64, scale: &DMatrix<f64>) -> f64 {
    let d = sigma.nrows();
    let chol = Cholesky::new(sigma.clone()).expect("positive definite sigma");
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let mut tr = 0.0;
    for col in 0..d {
        let scol = scale.column(col).into_owned();
        tr += chol.solve(&scol)[col];
    }
    -0.5 * ((dof + d as f64 + 1.0) * logdet + tr)
}

/// Matrix normal log density with row precision A and column covariance
/// Sigma, up to a constant in x.
#[cfg(test)]
pub(crate) fn log_matrix_normal(
    x: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    a: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> f64 {
    let k = x.nrows();
    let d = x.ncols();
    let chol_s = Cholesky::new(sigma.clone()).expect("positive definite sigma");
    let chol_a = Cholesky::new(a.clone()).expect("positive definite precision");
    let logdet_s: f64 = chol_s.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let logdet_a: f64 = chol_a.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let r = x - mean;
    // tr(Sigma^-1 R' A R)
    let ar = a * &r;
    let mut tr = 0.0;
    for col in 0..d {
        let rtar_col = r.transpose() * ar.column(col);
        tr += chol_s.solve(&rtar_col)[col];
    }
    0.5 * (d as f64 * logdet_a - k as f64 * logdet_s - tr)
}
