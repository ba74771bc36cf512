//! Sparse storage, symmetric positive-definite solves and numerical rank.
//!
//! Discrete-grid problems produce matrices with thousands of columns but only a
//! handful of nonzeros per row, so products are kept sparse and SPD systems with a
//! narrow band are factored in band storage. Everything else goes through dense
//! `nalgebra` factorizations.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{PilrError, Result};

/// Column count up to which normal-equation matrices are formed densely.
pub const DENSE_LIMIT: usize = 1500;
/// Smaller dimension up to which rank is computed from a full SVD.
pub const DENSE_RANK_LIMIT: usize = 1000;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from per-row entries; duplicates are summed and exact zeros dropped.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let col = row[i].0;
                let mut v = 0.0;
                while i < row.len() && row[i].0 == col {
                    v += row[i].1;
                    i += 1;
                }
                if v != 0.0 {
                    debug_assert!(col < ncols);
                    indices.push(col);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: indptr.len() - 1,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_rows(ncols, vec![Vec::new(); nrows])
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[usize], &[f64])> {
        (0..self.nrows).map(move |i| self.row(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (idx, val) = self.row(i);
        idx.binary_search(&j).map_or(0.0, |k| val[k])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, (idx, val)) in self.rows().enumerate() {
            for (&j, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Keep the first `k` rows.
    pub fn top_rows(&self, k: usize) -> SparseMatrix {
        let k = k.min(self.nrows);
        let end = self.indptr[k];
        SparseMatrix {
            nrows: k,
            ncols: self.ncols,
            indptr: self.indptr[..=k].to_vec(),
            indices: self.indices[..end].to_vec(),
            values: self.values[..end].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|(idx, val)| idx.iter().zip(val).map(|(&j, &v)| v * x[j]).sum())
            .collect()
    }

    /// `A^T y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for ((idx, val), &yi) in self.rows().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for (&j, &v) in idx.iter().zip(val) {
                out[j] += v * yi;
            }
        }
        out
    }

    /// `A^T A` in sparse form.
    pub fn gram(&self) -> SparseMatrix {
        let mut acc: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.ncols];
        for (idx, val) in self.rows() {
            for (a, (&i, &vi)) in idx.iter().zip(val).enumerate() {
                for (&j, &vj) in idx[a..].iter().zip(&val[a..]) {
                    acc[i].push((j, vi * vj));
                    if i != j {
                        acc[j].push((i, vi * vj));
                    }
                }
            }
        }
        SparseMatrix::from_rows(self.ncols, acc)
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.rows()
            .enumerate()
            .flat_map(|(i, (idx, _))| idx.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let rows = (0..self.nrows)
            .map(|i| {
                let (ia, va) = self.row(i);
                let (ib, vb) = other.row(i);
                ia.iter()
                    .zip(va)
                    .map(|(&j, &v)| (j, alpha * v))
                    .chain(ib.iter().zip(vb).map(|(&j, &v)| (j, beta * v)))
                    .collect()
            })
            .collect();
        SparseMatrix::from_rows(self.ncols, rows)
    }

    pub fn trace(&self) -> f64 {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).sum()
    }

    /// Estimate of the largest singular value by power iteration on `A^T A`.
    pub fn spectral_norm_estimate(&self, iterations: usize) -> f64 {
        if self.nnz() == 0 {
            return 0.0;
        }
        let mut v: Vec<f64> = (0..self.ncols)
            .map(|j| 1.0 + 0.01 * ((j * 7919) % 101) as f64)
            .collect();
        let mut sigma = 0.0;
        for _ in 0..iterations {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let av = self.mul_vec(&v);
            sigma = av.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = self.tr_mul_vec(&av);
        }
        sigma
    }
}

/// Symmetric positive-definite band matrix, lower band stored row by row.
struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    fn from_sparse(a: &SparseMatrix, bw: usize, shift: f64) -> Self {
        let n = a.nrows();
        let mut data = vec![0.0; n * (bw + 1)];
        for (i, (idx, val)) in a.rows().enumerate() {
            for (&j, &v) in idx.iter().zip(val) {
                if j <= i {
                    data[i * (bw + 1) + (j + bw - i)] = v;
                }
            }
            data[i * (bw + 1) + bw] += shift;
        }
        Self { n, bw, data }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * (self.bw + 1) + (j + self.bw - i)]
    }

    /// In-place `L L^T`; false when a pivot is not positive.
    fn factor(&mut self) -> bool {
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(self.bw));
                let mut s = self.at(i, j);
                for k in klo..j {
                    s -= self.at(i, k) * self.at(j, k);
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return false;
                    }
                    *self.at_mut(i, i) = s.sqrt();
                } else {
                    *self.at_mut(i, j) = s / self.at(j, j);
                }
            }
        }
        true
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.at(i, k) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = y[i];
            for k in (i + 1)..=hi {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
        y
    }
}

/// Symmetric positive-definite system matrix.
#[derive(Debug, Clone)]
pub enum SpdMatrix {
    Dense(DMatrix<f64>),
    Sparse(SparseMatrix),
}

impl SpdMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SpdMatrix::Dense(m) => m.nrows(),
            SpdMatrix::Sparse(s) => s.nrows(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            SpdMatrix::Dense(m) => m.trace(),
            SpdMatrix::Sparse(s) => s.trace(),
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            SpdMatrix::Dense(m) => (m * DVector::from_column_slice(x)).as_slice().to_vec(),
            SpdMatrix::Sparse(s) => s.mul_vec(x),
        }
    }

    fn try_solve(&self, b: &[f64], shift: f64) -> Option<Vec<f64>> {
        match self {
            SpdMatrix::Dense(m) => {
                let mut a = m.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += shift;
                }
                let chol = a.cholesky()?;
                let x = chol.solve(&DVector::from_column_slice(b));
                x.iter().all(|v| v.is_finite()).then(|| x.as_slice().to_vec())
            }
            SpdMatrix::Sparse(s) => {
                let bw = s.bandwidth();
                if 4 * bw > s.nrows() {
                    return SpdMatrix::Dense(s.to_dense()).try_solve(b, shift);
                }
                let mut band = BandCholesky::from_sparse(s, bw, shift);
                if !band.factor() {
                    return None;
                }
                let x = band.solve(b);
                x.iter().all(|v| v.is_finite()).then_some(x)
            }
        }
    }

    /// Cholesky solve, retrying once with a `1e-12 * trace` diagonal shift.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.dim() {
            return Err(PilrError::DimensionMismatch {
                expected: self.dim(),
                found: b.len(),
            });
        }
        if let Some(x) = self.try_solve(b, 0.0) {
            return Ok(x);
        }
        let jitter = 1e-12 * self.trace().abs().max(f64::MIN_POSITIVE);
        self.try_solve(b, jitter).ok_or(PilrError::SingularSystem)
    }
}

/// Number of singular values above `rel_tol` times the largest one.
pub fn numeric_rank(a: &DMatrix<f64>, rel_tol: f64) -> Result<usize> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(PilrError::NonFiniteMatrix);
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0);
    }
    let sv = SVD::new(a.clone(), false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_tol * smax).count())
}

/// Rank of a sparse matrix. Small matrices use a full SVD; large ones a
/// row-wise Givens QR that drops entries below `rel_tol * sigma_max` (Heath's
/// rank-detection rule), keeping the band structure intact.
pub fn numeric_rank_sparse(a: &SparseMatrix, rel_tol: f64) -> Result<usize> {
    if !a.is_finite() {
        return Err(PilrError::NonFiniteMatrix);
    }
    if a.nrows().min(a.ncols()) <= DENSE_RANK_LIMIT {
        return numeric_rank(&a.to_dense(), rel_tol);
    }
    Ok(givens_rank(a, rel_tol))
}

pub(crate) fn givens_rank(a: &SparseMatrix, rel_tol: f64) -> usize {
    let sigma = a.spectral_norm_estimate(100);
    if sigma == 0.0 {
        return 0;
    }
    let drop = rel_tol * sigma;
    // Triangular factor: pivot column -> row segment starting at that column.
    let mut r: Vec<Option<Vec<f64>>> = vec![None; a.ncols()];
    let mut rank = 0;
    for (idx, val) in a.rows() {
        let Some(&lo) = idx.first() else { continue };
        let hi = *idx.last().unwrap();
        let mut seg = vec![0.0; hi - lo + 1];
        for (&j, &v) in idx.iter().zip(val) {
            seg[j - lo] = v;
        }
        let mut col = lo;
        while col < lo + seg.len() {
            let v = seg[col - lo];
            if v.abs() <= drop {
                seg[col - lo] = 0.0;
                col += 1;
                continue;
            }
            match r[col].as_mut() {
                None => {
                    r[col] = Some(seg[col - lo..].to_vec());
                    rank += 1;
                    break;
                }
                Some(prow) => {
                    let end = (col + prow.len()).max(lo + seg.len());
                    prow.resize(end - col, 0.0);
                    seg.resize(end - lo, 0.0);
                    let (x0, y0) = (prow[0], v);
                    let h = x0.hypot(y0);
                    let (c, s) = (x0 / h, y0 / h);
                    for k in col..end {
                        let x = prow[k - col];
                        let y = seg[k - lo];
                        prow[k - col] = c * x + s * y;
                        seg[k - lo] = -s * x + c * y;
                    }
                    seg[col - lo] = 0.0;
                    col += 1;
                }
            }
        }
    }
    rank
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(PilrError::NonFiniteMatrix);
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}
