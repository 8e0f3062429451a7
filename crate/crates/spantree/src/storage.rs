//! Weight matrix storage.
//!
//! Graphs up to [`DENSE_NODE_LIMIT`] nodes are held as dense row-major
//! matrices; larger graphs switch to compressed sparse rows. Both layouts
//! expose the same row/column access surface so the algorithms upstream never
//! branch on the representation.

use nalgebra::DMatrix;

/// Largest node count stored densely. Above this the edge lists of the
/// benchmark graphs are sparse enough that CSR wins on both memory and
/// matrix-vector products.
pub const DENSE_NODE_LIMIT: usize = 4096;

/// Compressed sparse row matrix with an explicit transpose for column access.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    /// Builds a CSR matrix from (row, col, value) triples. Zero values are
    /// dropped; duplicate coordinates are summed.
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Csr {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triples {
            if v != 0.0 {
                rows[r].push((c, v));
            }
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    data.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, data }
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi].iter().copied().zip(self.data[lo..hi].iter().copied())
    }

    pub fn transpose(&self) -> Csr {
        let triples: Vec<(usize, usize, f64)> = (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        Csr::from_triples(self.n, &triples)
    }
}

/// Square nonnegative weight matrix, dense or sparse by node count.
#[derive(Debug, Clone)]
pub enum WeightMatrix {
    Dense(DMatrix<f64>),
    /// Forward CSR plus its transpose, kept in lockstep.
    Sparse { fwd: Csr, rev: Csr },
}

impl WeightMatrix {
    pub fn from_dense(m: DMatrix<f64>) -> WeightMatrix {
        WeightMatrix::Dense(m)
    }

    /// Picks storage by node count: dense up to [`DENSE_NODE_LIMIT`].
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> WeightMatrix {
        if n <= DENSE_NODE_LIMIT {
            let mut m = DMatrix::zeros(n, n);
            for &(r, c, v) in triples {
                m[(r, c)] += v;
            }
            WeightMatrix::Dense(m)
        } else {
            Self::sparse_from_triples(n, triples)
        }
    }

    pub fn sparse_from_triples(n: usize, triples: &[(usize, usize, f64)]) -> WeightMatrix {
        let fwd = Csr::from_triples(n, triples);
        let rev = fwd.transpose();
        WeightMatrix::Sparse { fwd, rev }
    }

    pub fn nrows(&self) -> usize {
        match self {
            WeightMatrix::Dense(m) => m.nrows(),
            WeightMatrix::Sparse { fwd, .. } => fwd.n,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self {
            WeightMatrix::Dense(m) => m[(r, c)],
            WeightMatrix::Sparse { fwd, .. } => {
                let lo = fwd.indptr[r];
                let hi = fwd.indptr[r + 1];
                match fwd.indices[lo..hi].binary_search(&c) {
                    Ok(k) => fwd.data[lo + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Nonzero entries of row `r` as (column, value).
    pub fn row_iter(&self, r: usize) -> RowIter<'_> {
        match self {
            WeightMatrix::Dense(m) => RowIter::Dense { m, r, c: 0 },
            WeightMatrix::Sparse { fwd, .. } => RowIter::Sparse {
                cols: &fwd.indices[fwd.indptr[r]..fwd.indptr[r + 1]],
                vals: &fwd.data[fwd.indptr[r]..fwd.indptr[r + 1]],
                k: 0,
            },
        }
    }

    /// Nonzero entries of column `c` as (row, value).
    pub fn col_iter(&self, c: usize) -> ColIter<'_> {
        match self {
            WeightMatrix::Dense(m) => ColIter::Dense { m, c, r: 0 },
            WeightMatrix::Sparse { rev, .. } => ColIter::Sparse {
                rows: &rev.indices[rev.indptr[c]..rev.indptr[c + 1]],
                vals: &rev.data[rev.indptr[c]..rev.indptr[c + 1]],
                k: 0,
            },
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let n = self.nrows();
        (0..n).map(|r| self.row_iter(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let n = self.nrows();
        let mut out = vec![0.0; n];
        for r in 0..n {
            for (c, v) in self.row_iter(r) {
                out[c] += v;
            }
        }
        out
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.nrows();
        for r in 0..n {
            out[r] = self.row_iter(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// `out = self^T * x`.
    pub fn matvec_t(&self, x: &[f64], out: &mut [f64]) {
        let n = self.nrows();
        match self {
            WeightMatrix::Dense(m) => {
                for c in 0..n {
                    let mut acc = 0.0;
                    for r in 0..n {
                        acc += m[(r, c)] * x[r];
                    }
                    out[c] = acc;
                }
            }
            WeightMatrix::Sparse { rev, .. } => {
                for c in 0..n {
                    out[c] = rev.row(c).map(|(r, v)| v * x[r]).sum();
                }
            }
        }
    }

    /// Applies `f(row, col, value)` to every stored entry, preserving layout.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> WeightMatrix {
        match self {
            WeightMatrix::Dense(m) => {
                let n = m.nrows();
                let mut out = DMatrix::zeros(n, n);
                for r in 0..n {
                    for c in 0..n {
                        let v = m[(r, c)];
                        if v != 0.0 {
                            out[(r, c)] = f(r, c, v);
                        }
                    }
                }
                WeightMatrix::Dense(out)
            }
            WeightMatrix::Sparse { fwd, .. } => {
                let triples: Vec<(usize, usize, f64)> = (0..fwd.n)
                    .flat_map(|r| {
                        fwd.row(r).map(|(c, v)| (r, c, v)).collect::<Vec<_>>()
                    })
                    .map(|(r, c, v)| (r, c, f(r, c, v)))
                    .collect();
                WeightMatrix::sparse_from_triples(fwd.n, &triples)
            }
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self, WeightMatrix::Dense(_))
    }

    /// Materializes as a dense matrix. Intended for the small-system paths
    /// (eigensolves, determinants) that are gated on node count anyway.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            WeightMatrix::Dense(m) => m.clone(),
            WeightMatrix::Sparse { fwd, .. } => {
                let mut m = DMatrix::zeros(fwd.n, fwd.n);
                for r in 0..fwd.n {
                    for (c, v) in fwd.row(r) {
                        m[(r, c)] = v;
                    }
                }
                m
            }
        }
    }
}

pub enum RowIter<'a> {
    Dense { m: &'a DMatrix<f64>, r: usize, c: usize },
    Sparse { cols: &'a [usize], vals: &'a [f64], k: usize },
}

impl<'a> Iterator for RowIter<'a> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            RowIter::Dense { m, r, c } => {
                while *c < m.ncols() {
                    let col = *c;
                    *c += 1;
                    let v = m[(*r, col)];
                    if v != 0.0 {
                        return Some((col, v));
                    }
                }
                None
            }
            RowIter::Sparse { cols, vals, k } => {
                if *k < cols.len() {
                    let out = (cols[*k], vals[*k]);
                    *k += 1;
                    Some(out)
                } else {
                    None
                }
            }
        }
    }
}

pub enum ColIter<'a> {
    Dense { m: &'a DMatrix<f64>, c: usize, r: usize },
    Sparse { rows: &'a [usize], vals: &'a [f64], k: usize },
}

impl<'a> Iterator for ColIter<'a> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Dense { m, c, r } => {
                while *r < m.nrows() {
                    let row = *r;
                    *r += 1;
                    let v = m[(row, *c)];
                    if v != 0.0 {
                        return Some((row, v));
                    }
                }
                None
            }
            ColIter::Sparse { rows, vals, k } => {
                if *k < rows.len() {
                    let out = (rows[*k], vals[*k]);
                    *k += 1;
                    Some(out)
                } else {
                    None
                }
            }
        }
    }
}
