//! Small dense linear-algebra helpers: float and exact determinants,
//! numerical rank, weighted least squares.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Determinant by LU with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// Exact determinant by fraction-free-style elimination over the rationals.
pub fn det_exact(rows: &[Vec<BigRational>]) -> Result<BigRational> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::invalid("determinant needs a square matrix"));
    }
    let mut a: Vec<Vec<BigRational>> = rows.to_vec();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Ok(BigRational::zero());
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        let pivot = a[col][col].clone();
        det *= &pivot;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let factor = &a[r][col] / &pivot;
            for c in col..n {
                let sub = &factor * &a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    Ok(det)
}

/// Euclidean norms of the columns.
pub fn column_norms(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.norm()).collect()
}

/// `σ_max / σ_min` (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Minimum-norm solution of `min Σ_i w_i (A x − b)_i²` via SVD of the
/// row-scaled system; singular values below `rel_tol · σ_max` are dropped.
pub fn weighted_lstsq_svd(a: &DMatrix<f64>, b: &DVector<f64>, w: &[f64], rel_tol: f64) -> Result<DVector<f64>> {
    Error::check_dim(a.nrows(), b.len())?;
    Error::check_dim(a.nrows(), w.len())?;
    let mut sa = a.clone();
    let mut sb = b.clone();
    for (i, &wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        sa.row_mut(i).scale_mut(s);
        sb[i] *= s;
    }
    let svd = sa.svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    svd.solve(&sb, rel_tol * max)
        .map_err(|e| Error::DegenerateBasis(e.to_string()))
}
