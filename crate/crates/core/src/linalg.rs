//! Small dense helpers on top of faer.

use faer::linalg::solvers::Llt;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};
use crate::C64;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub(crate) fn col_vec(v: &[C64]) -> Mat<C64> {
    Mat::from_fn(v.len(), 1, |r, _| v[r])
}

pub(crate) fn norm2_sqr(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// A^H y
pub(crate) fn adjoint_apply(a: MatRef<'_, C64>, y: &[C64]) -> Vec<C64> {
    (0..a.ncols())
        .map(|q| a.col(q).iter().zip(y).map(|(x, v)| x.conj() * v).sum())
        .collect()
}

pub(crate) fn select_columns(a: MatRef<'_, C64>, cols: &[usize]) -> Mat<C64> {
    Mat::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])])
}

pub(crate) fn all_finite(a: MatRef<'_, C64>) -> bool {
    (0..a.ncols()).all(|c| a.col(c).iter().all(|v| v.re.is_finite() && v.im.is_finite()))
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix.
pub(crate) fn cholesky(m: MatRef<'_, C64>, what: &str) -> Result<Llt<C64>> {
    m.llt(Side::Lower)
        .map_err(|e| Error::numerical(format!("Cholesky of {what} failed: {e:?}")))
}

/// log det of the matrix factored by `llt`.
pub(crate) fn llt_logdet(llt: &Llt<C64>) -> f64 {
    let l = llt.L();
    (0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

/// Hermitian eigenvalues in ascending order.
pub(crate) fn hermitian_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("Hermitian eigendecomposition failed: {e:?}")))
}
