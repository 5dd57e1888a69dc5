//! Dense symmetric eigenproblems and null spaces on top of `faer`.

use alloc::vec::Vec;

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::linalg::solvers::Solve;
use faer::{Mat, Par, Side};

use crate::sparse::Csr;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DenseError {
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    Singular,
}

pub fn from_csr(a: &Csr) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(a.nrows, a.ncols);
    for i in 0..a.nrows {
        for k in a.indptr[i]..a.indptr[i + 1] {
            m[(i, a.indices[k])] += a.data[k];
        }
    }
    m
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn sym_eig(a: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), DenseError> {
    let e = symmetrize(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| DenseError::NoConvergence)?;
    let s = e.S().column_vector();
    let vals = (0..s.nrows()).map(|i| s[i]).collect();
    Ok((vals, e.U().to_owned()))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(b: &Mat<f64>) -> Result<Mat<f64>, DenseError> {
    let llt = symmetrize(b)
        .llt(Side::Lower)
        .map_err(|_| DenseError::NotPositiveDefinite)?;
    Ok(llt.L().to_owned())
}

/// Generalized symmetric-definite problem `A x = lambda B x`. Eigenvalues
/// ascending; eigenvectors are `B`-orthonormal.
pub fn gen_sym_eig(a: &Mat<f64>, b: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>), DenseError> {
    let l = cholesky(b)?;
    // C = L^{-1} A L^{-T}
    let mut x = a.clone();
    solve_lower_triangular_in_place(l.as_ref(), x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let (vals, y) = sym_eig(&c)?;
    let mut v = y;
    solve_upper_triangular_in_place(l.transpose(), v.as_mut(), Par::Seq);
    Ok((vals, v))
}

/// Orthonormal basis of the null space of `a` (columns), with singular
/// values below `rel_tol * s_max` treated as zero. Also returns the rank.
pub fn null_space(a: &Mat<f64>, rel_tol: f64) -> Result<(Mat<f64>, usize), DenseError> {
    let (m, n) = (a.nrows(), a.ncols());
    let svd = a.svd().map_err(|_| DenseError::NoConvergence)?;
    let s = svd.S().column_vector();
    let smax = if s.nrows() > 0 { s[0] } else { 0.0 };
    let rank = (0..s.nrows().min(m).min(n)).filter(|&i| s[i] > rel_tol * smax).count();
    let v = svd.V();
    Ok((Mat::from_fn(n, n - rank, |i, j| v[(i, rank + j)]), rank))
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>, DenseError> {
    let lu = a.partial_piv_lu();
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = lu.solve(&rhs);
    let out: Vec<f64> = (0..x.nrows()).map(|i| x[(i, 0)]).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(DenseError::Singular)
    }
}

pub fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum())
        .collect()
}

pub fn column(a: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_eigenpairs() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else if i.abs_diff(j) == 1 { -1.0 } else { 0.0 });
        let b = Mat::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let (vals, v) = gen_sym_eig(&a, &b).unwrap();
        for k in 0..3 {
            let x = column(&v, k);
            let ax = mat_vec(&a, &x);
            let bx = mat_vec(&b, &x);
            for i in 0..3 {
                assert!((ax[i] - vals[k] * bx[i]).abs() < 1e-12);
            }
            let nb: f64 = x.iter().zip(&bx).map(|(p, q)| p * q).sum();
            assert!((nb - 1.0).abs() < 1e-12);
        }
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
    }

    #[test]
    fn null_space_of_rank_one() {
        let a = Mat::from_fn(2, 3, |i, j| ((i + 1) * (j + 1)) as f64);
        let (z, rank) = null_space(&a, 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert_eq!(z.ncols(), 2);
        for k in 0..2 {
            let r = mat_vec(&a, &column(&z, k));
            assert!(r.iter().all(|v| v.abs() < 1e-12));
        }
    }
}
