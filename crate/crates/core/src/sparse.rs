//! Compressed sparse row matrices and a direct solver.
//!
//! Assembly collects `(row, col, value)` triplets; duplicates are summed in
//! insertion order so the result does not depend on sort internals. The
//! factorization is delegated to `faer`'s sparse LU.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::fem::NONE;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("singular matrix: no pivot found at elimination step {0}")]
    Singular(usize),
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve produced non-finite values")]
    NonFinite,
}

/// Triplet accumulator. Entries addressed to `NONE` (eliminated dofs) are
/// dropped silently.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if i != NONE && j != NONE {
            debug_assert!(i < self.nrows && j < self.ncols);
            self.entries.push((i, j, v));
        }
    }

    /// Add `scale * m` with its top-left corner at `(r0, c0)`.
    pub fn push_block(&mut self, m: &Csr, r0: usize, c0: usize, scale: f64) {
        for i in 0..m.nrows {
            for k in m.indptr[i]..m.indptr[i + 1] {
                self.entries.push((r0 + i, c0 + m.indices[k], scale * m.data[k]));
            }
        }
    }

    /// Add `scale * m^T` with its top-left corner at `(r0, c0)`.
    pub fn push_block_t(&mut self, m: &Csr, r0: usize, c0: usize, scale: f64) {
        for i in 0..m.nrows {
            for k in m.indptr[i]..m.indptr[i + 1] {
                self.entries.push((r0 + m.indices[k], c0 + i, scale * m.data[k]));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csr(&self) -> Csr {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&k| (self.entries[k].0, self.entries[k].1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = self.entries[k];
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn zeros(nrows: usize, ncols: usize) -> Csr {
        Csr {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Csr {
        Csr {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.data[self.indptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// `y += scale * A x`.
    pub fn mul_add(&self, x: &[f64], y: &mut [f64], scale: f64) {
        debug_assert_eq!(x.len(), self.ncols);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            y[i] += scale * s;
        }
    }

    /// `y += scale * A^T x`.
    pub fn mul_t_add(&self, x: &[f64], y: &mut [f64], scale: f64) {
        debug_assert_eq!(x.len(), self.nrows);
        for i in 0..self.nrows {
            let xi = scale * x[i];
            for k in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[k]] += self.data[k] * xi;
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_add(x, &mut y, 1.0);
        y
    }

    pub fn mul_t(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        self.mul_t_add(x, &mut y, 1.0);
        y
    }

    /// Bilinear form `x^T A y`.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.nrows {
            let mut r = 0.0;
            for k in self.indptr[i]..self.indptr[i + 1] {
                r += self.data[k] * y[self.indices[k]];
            }
            s += x[i] * r;
        }
        s
    }

    pub fn transpose(&self) -> Csr {
        let mut t = Triplets::new(self.ncols, self.nrows);
        t.push_block_t(self, 0, 0, 1.0);
        t.to_csr()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= s;
        }
        m
    }

    /// `self + s * other`.
    pub fn add(&self, other: &Csr, s: f64) -> Csr {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = Triplets::new(self.nrows, self.ncols);
        t.push_block(self, 0, 0, 1.0);
        t.push_block(other, 0, 0, s);
        t.to_csr()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.add(&self.transpose(), -1.0);
        d.max_abs()
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                d[i * self.ncols + self.indices[k]] += self.data[k];
            }
        }
        d
    }

    pub fn to_faer(&self) -> SparseColMat<usize, f64> {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                trips.push(Triplet::new(i, self.indices[k], self.data[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .expect("valid triplets")
    }

    /// Restrict to the given rows and columns (in the given order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Csr {
        let mut cmap = vec![NONE; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            cmap[c] = k;
        }
        let mut t = Triplets::new(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                t.push(r, cmap[self.indices[k]], self.data[k]);
            }
        }
        t.to_csr()
    }
}

fn map_lu_error(e: faer::sparse::linalg::LuError) -> SolveError {
    match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => SolveError::Singular(index),
        other => SolveError::Factorization(format!("{:?}", other)),
    }
}

/// Symbolic analysis reusable across matrices with one sparsity pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    sym: SymbolicLu<usize>,
    indptr: Vec<usize>,
    indices: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &Csr) -> Result<Symbolic, SolveError> {
        let m = a.to_faer();
        let sym = SymbolicLu::try_new(m.symbolic()).map_err(|e| SolveError::Factorization(format!("{:?}", e)))?;
        Ok(Symbolic {
            sym,
            indptr: a.indptr.clone(),
            indices: a.indices.clone(),
        })
    }

    pub fn matches(&self, a: &Csr) -> bool {
        self.indptr == a.indptr && self.indices == a.indices
    }
}

/// Sparse LU factorization.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<SparseLu, SolveError> {
        let sym = Symbolic::analyze(a)?;
        SparseLu::with_symbolic(&sym, a)
    }

    pub fn with_symbolic(sym: &Symbolic, a: &Csr) -> Result<SparseLu, SolveError> {
        assert_eq!(a.nrows, a.ncols);
        let m = a.to_faer();
        let lu = Lu::try_new_with_symbolic(sym.sym.clone(), m.as_ref()).map_err(map_lu_error)?;
        Ok(SparseLu { lu, n: a.nrows })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        assert_eq!(b.len(), self.n);
        let rhs = Mat::<f64>::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(SolveError::NonFinite)
        }
    }

    /// Solve for several right-hand sides stored column by column.
    pub fn solve_many(&self, cols: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SolveError> {
        if cols.is_empty() {
            return Ok(Vec::new());
        }
        let rhs = Mat::<f64>::from_fn(self.n, cols.len(), |i, j| cols[j][i]);
        let x = self.lu.solve(&rhs);
        let mut out = Vec::with_capacity(cols.len());
        for j in 0..cols.len() {
            let c: Vec<f64> = (0..self.n).map(|i| x[(i, j)]).collect();
            if !c.iter().all(|v| v.is_finite()) {
                return Err(SolveError::NonFinite);
            }
            out.push(c);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_sum_and_sort() {
        let mut t = Triplets::new(2, 3);
        t.push(1, 2, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 2, 3.0);
        t.push(NONE, 0, 9.0);
        let m = t.to_csr();
        assert_eq!(m.get(1, 2), 4.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.transpose().get(2, 1), 4.0);
    }

    #[test]
    fn lu_solves_small_system() {
        let mut t = Triplets::new(3, 3);
        for (i, j, v) in [(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0), (2, 2, 2.0), (2, 0, 1.0)] {
            t.push(i, j, v);
        }
        let a = t.to_csr();
        let lu = SparseLu::new(&a).unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]).unwrap();
        let r = a.mul(&x);
        for (ri, bi) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((ri - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn structurally_singular_reported() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 1.0);
        let a = t.to_csr();
        assert!(SparseLu::new(&a).is_err());
    }
}
