//! Compressed sparse row matrix. Indices are 0-based here; the coordinate
//! text export writes 1-based indices.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Row-wise sparsity summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub n_rows: usize,
    pub n_cols: usize,
    pub nnz: usize,
    pub max_row_nnz: usize,
    pub zero_rows: usize,
    pub zero_cols: usize,
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, row_ptr: vec![0; n_rows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect())
            .expect("diagonal indices are in range")
    }

    /// Build from `(row, col, value)` triplets. Duplicates are summed and
    /// entries that end up exactly zero are dropped.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange { context: "sparse.row", index: r + 1, max: n_rows });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange { context: "sparse.col", index: c + 1, max: n_cols });
            }
        }
        triplets.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        let mut k = 0;
        while k < triplets.len() {
            let (r, c, mut v) = triplets[k];
            k += 1;
            while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                v += triplets[k].2;
                k += 1;
            }
            if v != 0.0 {
                rows.push(r);
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self { n_rows, n_cols, row_ptr, col_idx, values })
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t).expect("dense indices are in range")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    fn check_len(&self, len: usize, expected: usize, context: &'static str) -> Result<()> {
        if len != expected {
            return Err(Error::DimensionMismatch { context, expected, got: len });
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    /// `y = A x`, overwriting `y`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.check_len(x.len(), self.n_cols, "sparse.matvec")?;
        self.check_len(y.len(), self.n_rows, "sparse.matvec")?;
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum();
        }
        Ok(())
    }

    /// `Aᵀ x`.
    pub fn tmatvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len(), self.n_rows, "sparse.tmatvec")?;
        let mut y = vec![0.0; self.n_cols];
        for (r, &xr) in x.iter().enumerate() {
            if xr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += v * xr;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.n_cols, self.n_rows, t).expect("transpose indices are in range")
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        if s == 0.0 {
            return Self::zeros(self.n_rows, self.n_cols);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                context: "sparse.add",
                expected: self.n_rows * self.n_cols,
                got: other.n_rows * other.n_cols,
            });
        }
        let t = self.triplets().chain(other.triplets()).collect();
        Self::from_triplets(self.n_rows, self.n_cols, t)
    }

    /// Sparse product `A B`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_len(other.n_rows, self.n_cols, "sparse.matmul")?;
        let mut t = Vec::new();
        let mut acc = vec![0.0; other.n_cols];
        let mut touched = Vec::new();
        let mut mark = vec![false; other.n_cols];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (c2, v2) = other.row(k);
                for (&c, &b) in c2.iter().zip(v2) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.n_rows, other.n_cols, t)
    }

    /// Kronecker product `A ⊗ B`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut t = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                t.push((r1 * other.n_rows + r2, c1 * other.n_cols + c2, v1 * v2));
            }
        }
        Self::from_triplets(self.n_rows * other.n_rows, self.n_cols * other.n_cols, t)
            .expect("kron indices are in range")
    }

    /// Block-diagonal direct sum `⊕_k M_k`.
    pub fn direct_sum(blocks: &[Self]) -> Self {
        let n_rows = blocks.iter().map(|b| b.n_rows).sum();
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut t = Vec::new();
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            t.extend(b.triplets().map(|(r, c, v)| (r + r0, c + c0, v)));
            r0 += b.n_rows;
            c0 += b.n_cols;
        }
        Self::from_triplets(n_rows, n_cols, t).expect("direct-sum indices are in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let mut cols = vec![0.0; self.n_cols];
        for (_, c, v) in self.triplets() {
            cols[c] += v.abs();
        }
        cols.into_iter().fold(0.0, f64::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n_rows).map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_row_nnz(&self) -> usize {
        (0..self.n_rows).map(|r| self.row_nnz(r)).max().unwrap_or(0)
    }

    pub fn max_col_nnz(&self) -> usize {
        let mut counts = vec![0usize; self.n_cols];
        for &c in &self.col_idx {
            counts[c] += 1;
        }
        counts.into_iter().max().unwrap_or(0)
    }

    pub fn zero_column_count(&self) -> usize {
        let mut used = vec![false; self.n_cols];
        for &c in &self.col_idx {
            used[c] = true;
        }
        used.iter().filter(|u| !**u).count()
    }

    pub fn zero_row_count(&self) -> usize {
        (0..self.n_rows).filter(|&r| self.row_nnz(r) == 0).count()
    }

    pub fn is_diagonal(&self) -> bool {
        self.triplets().all(|(r, c, _)| r == c)
    }

    /// `A + Aᵀ = 0` exactly.
    pub fn is_antisymmetric(&self) -> bool {
        self.n_rows == self.n_cols && self.triplets().all(|(r, c, v)| self.get(c, r) == -v)
    }

    pub fn sparsity(&self) -> SparsityReport {
        SparsityReport {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            nnz: self.nnz(),
            max_row_nnz: self.max_row_nnz(),
            zero_rows: self.zero_row_count(),
            zero_cols: self.zero_column_count(),
        }
    }

    /// Coordinate text, one `row col value` line per entry, 1-based.
    pub fn to_coo_string(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:e}", r + 1, c + 1, v);
        }
        s
    }

    /// Exact entry-by-entry equality including the sparsity pattern.
    pub fn same_entries(&self, other: &Self) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> SparseMatrix {
        SparseMatrix::from_triplets(3, 4, vec![(0, 1, 2.0), (2, 3, -1.0), (0, 1, 1.0), (1, 0, 4.0), (2, 2, 0.0)])
            .unwrap()
    }

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = sample();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.max_row_nnz(), 1);
        assert_eq!(m.zero_column_count(), 1);
        let cancel = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 1.0), (0, 0, -1.0)]).unwrap();
        assert_eq!(cancel.nnz(), 0);
    }

    #[test]
    fn out_of_range_triplet_fails() {
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::from_triplets(2, 2, vec![(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn products_match_dense() {
        let a = sample();
        let b = SparseMatrix::from_triplets(4, 2, vec![(0, 0, 1.0), (1, 1, -2.0), (3, 0, 5.0), (2, 1, 0.5)]).unwrap();
        let dense = a.to_dense() * b.to_dense();
        assert_eq!(a.matmul(&b).unwrap().to_dense(), dense);
        let x = [1.0, -1.0, 2.0, 0.5];
        let y = a.matvec(&x).unwrap();
        let yd = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        assert_eq!(y, yd.as_slice());
        let z = a.tmatvec(&[1.0, 2.0, 3.0]).unwrap();
        let zd = a.to_dense().transpose() * nalgebra::DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(z, zd.as_slice());
        assert!(a.matvec(&[1.0]).is_err());
    }

    #[test]
    fn kron_and_direct_sum_match_dense() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, -1.0)]).unwrap();
        let b = sample();
        assert_eq!(a.kron(&b).to_dense(), a.to_dense().kronecker(&b.to_dense()));
        let s = SparseMatrix::direct_sum(&[a.clone(), b.clone()]);
        assert_eq!(s.n_rows(), 5);
        assert_eq!(s.n_cols(), 6);
        assert_eq!(s.get(2, 3), 3.0);
        assert_eq!(s.get(0, 1), 1.0);
    }

    #[test]
    fn norms() {
        let m = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]));
        assert_eq!(m.norm_one(), 6.0);
        assert_eq!(m.norm_inf(), 7.0);
        assert!((m.frobenius() - 30f64.sqrt()).abs() < 1e-15);
        assert!(!m.is_antisymmetric());
        let k = SparseMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[0.0, 2.0, -2.0, 0.0]));
        assert!(k.is_antisymmetric());
        assert!(SparseMatrix::from_diagonal(&[1.0, 2.0]).is_diagonal());
    }

    #[test]
    fn coo_export_is_one_based() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(1, 0, 2.5)]).unwrap();
        assert_eq!(m.to_coo_string(), "2 1 2.5e0\n");
    }

    proptest! {
        #[test]
        fn transpose_is_involution(entries in proptest::collection::vec((0usize..6, 0usize..5, -3.0f64..3.0), 0..30)) {
            let m = SparseMatrix::from_triplets(6, 5, entries).unwrap();
            prop_assert_eq!(m.transpose().transpose(), m.clone());
            prop_assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
        }
    }
}
