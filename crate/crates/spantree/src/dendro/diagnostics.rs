//! Chain diagnostics: autocorrelation, effective sample size, and the
//! posterior similarity matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use super::chains::RetainedSample;
use super::DendroError;

/// Sample autocorrelations up to `max_lag` (inclusive), with acf[0] = 1.
/// Returns an error on constant traces.
pub fn autocorrelation(trace: &[f64], max_lag: usize) -> Result<Vec<f64>, DendroError> {
    let n = trace.len();
    if n < 10 {
        return Err(DendroError::TraceTooShort);
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let c0: f64 = trace.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return Err(DendroError::ZeroVariance);
    }
    let kmax = max_lag.min(n - 1);
    let mut acf = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let ck: f64 = (0..n - k)
            .map(|t| (trace[t] - mean) * (trace[t + k] - mean))
            .sum::<f64>()
            / n as f64;
        acf.push(ck / c0);
    }
    Ok(acf)
}

/// Effective sample size N / (1 + 2 sum rho_k), truncating the
/// autocorrelation sum at the initial positive sequence: consecutive lag
/// pairs are summed and the series is cut at the first non-positive pair.
pub fn ess(trace: &[f64]) -> Result<f64, DendroError> {
    let n = trace.len();
    if n < 10 {
        return Err(DendroError::TraceTooShort);
    }
    let acf = autocorrelation(trace, n - 1)?;
    // Gamma_t = rho_{2t} + rho_{2t+1}; tau = 2 * sum Gamma_t - 1.
    let mut gamma_sum = 0.0;
    let mut t = 0;
    loop {
        let k = 2 * t;
        if k >= acf.len() {
            break;
        }
        let pair = acf[k] + if k + 1 < acf.len() { acf[k + 1] } else { 0.0 };
        if pair <= 0.0 {
            break;
        }
        gamma_sum += pair;
        t += 1;
    }
    let tau = (2.0 * gamma_sum - 1.0).max(1.0 / n as f64);
    Ok(n as f64 / tau)
}

/// Per-trace summary used by [`ChainDiagnostics`].
#[derive(Debug, Clone, Serialize)]
pub struct TraceDiagnostics {
    pub name: String,
    /// Full per-iteration trace values (including burn-in).
    pub values: Vec<f64>,
    /// Post-burn-in autocorrelations, acf[0] = 1. Empty when undefined.
    pub acf: Vec<f64>,
    /// Post-burn-in ESS divided by the post-burn-in length, clamped into
    /// (0, 1]. None when the trace is constant or too short.
    pub ess_per_iter: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainDiagnostics {
    pub iters: usize,
    pub burnin: usize,
    pub traces: Vec<TraceDiagnostics>,
}

/// Lags stored for reporting.
const ACF_LAGS: usize = 50;

impl ChainDiagnostics {
    pub(crate) fn from_traces(
        named: Vec<(&'static str, Vec<f64>)>,
        iters: usize,
        burnin: usize,
    ) -> ChainDiagnostics {
        let traces = named
            .into_iter()
            .map(|(name, values)| {
                let post = &values[burnin.min(values.len())..];
                let acf = autocorrelation(post, ACF_LAGS).unwrap_or_default();
                let ess_per_iter = ess(post)
                    .ok()
                    .map(|e| (e / post.len() as f64).min(1.0));
                TraceDiagnostics { name: name.to_string(), values, acf, ess_per_iter }
            })
            .collect();
        ChainDiagnostics { iters, burnin, traces }
    }

    pub fn trace(&self, name: &str) -> Option<&TraceDiagnostics> {
        self.traces.iter().find(|t| t.name == name)
    }
}

/// Posterior similarity: entry (i, i') is the fraction of samples in which
/// observations i and i' share an ancestor at `depth` in the reduced
/// dendrogram (root at depth 0). Observations attached above `depth` pair
/// with nobody; the diagonal is fixed at 1.
pub fn similarity_matrix(samples: &[RetainedSample], depth: usize, n: usize) -> DMatrix<f64> {
    assert!(!samples.is_empty(), "similarity needs at least one sample");
    let mut acc = DMatrix::zeros(n, n);
    for sample in samples {
        let depths = sample.dendro.depths();
        // Group observations by their depth-`depth` ancestor.
        let mut anchor: Vec<Option<usize>> = Vec::with_capacity(n);
        for &zi in &sample.z {
            anchor.push(sample.dendro.ancestor_at_depth(zi, depth, &depths));
        }
        for i in 0..n {
            let Some(a) = anchor[i] else { continue };
            for j in (i + 1)..n {
                if anchor[j] == Some(a) {
                    acc[(i, j)] += 1.0;
                    acc[(j, i)] += 1.0;
                }
            }
        }
    }
    let s = samples.len() as f64;
    let mut out = acc / s;
    for i in 0..n {
        out[(i, i)] = 1.0;
    }
    out
}
