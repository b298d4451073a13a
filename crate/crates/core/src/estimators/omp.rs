//! Orthogonal matching pursuit.

use faer::MatRef;

use crate::error::{Error, Result};
use crate::linalg::{col_vec, norm2_sqr, select_columns, ZERO};
use crate::C64;

/// Relative singular-value floor below which the support system is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    /// Least-squares coefficients, aligned with `support`.
    pub coefficients: Vec<C64>,
    pub residual_norm: f64,
    /// Residual norm before the first and after every iteration.
    pub residual_history: Vec<f64>,
    /// Set when some support system was rank deficient and the least-norm
    /// solution was used.
    pub rank_deficient: bool,
}

impl OmpResult {
    /// Dense length-`q` coefficient vector.
    pub fn dense(&self, q: usize) -> Vec<C64> {
        let mut out = vec![ZERO; q];
        for (&i, &c) in self.support.iter().zip(&self.coefficients) {
            out[i] = c;
        }
        out
    }
}

/// Runs `sparsity` greedy iterations: pick the column with the largest
/// normalized correlation |<a_q / ||a_q||, r>| (ties to the smaller index),
/// re-fit all selected columns by least squares, update the residual.
/// Stops early once the residual vanishes.
pub fn omp(a: MatRef<'_, C64>, y: &[C64], sparsity: usize) -> Result<OmpResult> {
    let q = a.ncols();
    if sparsity == 0 || sparsity > q {
        return Err(Error::config(format!(
            "omp sparsity must be in [1, {q}], got {sparsity}"
        )));
    }
    if y.len() != a.nrows() {
        return Err(Error::Dimension {
            what: "observation length vs sensing-matrix rows",
            expected: a.nrows(),
            got: y.len(),
        });
    }
    let norms: Vec<f64> = (0..q)
        .map(|c| a.col(c).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let y_norm = norm2_sqr(y).sqrt();
    let mut residual = y.to_vec();
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut coefficients = Vec::new();
    let mut history = vec![y_norm];
    let mut rank_deficient = false;

    for _ in 0..sparsity {
        let r_norm = *history.last().expect("history is never empty");
        if r_norm == 0.0 || r_norm <= 1e-14 * y_norm {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for c in 0..q {
            if norms[c] == 0.0 || support.contains(&c) {
                continue;
            }
            let corr: C64 = a.col(c).iter().zip(&residual).map(|(x, r)| x.conj() * r).sum();
            let score = corr.norm() / norms[c];
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((c, score));
            }
        }
        let Some((pick, _)) = best else { break };
        support.push(pick);

        let (coef, deficient) = least_squares(select_columns(a, &support).as_ref(), y)?;
        rank_deficient |= deficient;
        coefficients = coef;
        residual = y.to_vec();
        for (&c, &x) in support.iter().zip(&coefficients) {
            for (r, v) in residual.iter_mut().zip(a.col(c).iter()) {
                *r -= v * x;
            }
        }
        history.push(norm2_sqr(&residual).sqrt());
    }

    Ok(OmpResult {
        support,
        coefficients,
        residual_norm: *history.last().expect("history is never empty"),
        residual_history: history,
        rank_deficient,
    })
}

/// Least-norm least-squares solution through the thin SVD.
fn least_squares(a: MatRef<'_, C64>, y: &[C64]) -> Result<(Vec<C64>, bool)> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::numerical(format!("SVD of OMP support system failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let s_max = (0..k).map(|i| s[i].re).fold(0.0, f64::max);
    let u = svd.U();
    let v = svd.V();
    let uty = u.adjoint() * col_vec(y);
    let mut x = vec![ZERO; a.ncols()];
    let mut deficient = false;
    for i in 0..k {
        let si = s[i].re;
        if si <= RANK_TOL * s_max || si == 0.0 {
            deficient = true;
            continue;
        }
        let w = uty[(i, 0)] / si;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += v[(j, i)] * w;
        }
    }
    Ok((x, deficient))
}
