//! Pairwise error probability bounds for support detection.
//!
//! For a true support `q` and a same-sparsity alternative `q_hat`, the error
//! sequence is `e = q - q_hat`. Averaged over Rayleigh fading with per-point
//! variances `C`, the Chernoff bound on confusing the two is
//! `prod_i (1 + lambda_i / (4 N0))^-1`, where `lambda_i` are the nonzero
//! eigenvalues of `C^1/2 diag(e) A^H A diag(e) C^1/2`.

use faer::{Mat, MatRef};
use itertools::Itertools;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::complex_normal;
use crate::linalg::{hermitian_eigenvalues, select_columns};
use crate::C64;

/// Eigenvalues below this fraction of the largest one count as zero.
pub const RANK_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportHypothesis {
    pub q: Vec<bool>,
    pub sparsity: usize,
}

impl SupportHypothesis {
    pub fn from_indices(grid_len: usize, indices: &[usize]) -> Result<Self> {
        let mut q = vec![false; grid_len];
        for &i in indices {
            if i >= grid_len {
                return Err(Error::domain(format!("support index {i} outside grid of {grid_len}")));
            }
            if q[i] {
                return Err(Error::domain(format!("support index {i} repeated")));
            }
            q[i] = true;
        }
        Ok(SupportHypothesis {
            q,
            sparsity: indices.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.q.len()).filter(|&i| self.q[i]).collect()
    }
}

/// `e = q - q_hat` stored sparsely: `removed` are the +1 entries (active in
/// `q` only), `added` the -1 entries (active in `q_hat` only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSequence {
    pub grid_len: usize,
    pub removed: Vec<usize>,
    pub added: Vec<usize>,
}

impl ErrorSequence {
    pub fn order(&self) -> usize {
        self.removed.len()
    }

    pub fn dense(&self) -> Vec<i8> {
        let mut e = vec![0i8; self.grid_len];
        for &i in &self.removed {
            e[i] = 1;
        }
        for &i in &self.added {
            e[i] = -1;
        }
        e
    }

    pub fn is_zero(&self) -> bool {
        self.removed.is_empty() && self.added.is_empty()
    }
}

/// Every alternative support of the same sparsity reachable by at most
/// `order` substitutions, in increasing order and then lexicographically.
pub fn enumerate_errors(q: &SupportHypothesis, order: usize) -> Result<Vec<ErrorSequence>> {
    if order == 0 {
        return Err(Error::config("pep enumeration order must be >= 1"));
    }
    let active = q.active();
    let inactive: Vec<usize> = (0..q.len()).filter(|&i| !q.q[i]).collect();
    let max_order = order.min(active.len()).min(inactive.len());
    let mut out = Vec::new();
    for d in 1..=max_order {
        for removed in active.iter().copied().combinations(d) {
            for added in inactive.iter().copied().combinations(d) {
                out.push(ErrorSequence {
                    grid_len: q.len(),
                    removed: removed.clone(),
                    added,
                });
            }
        }
    }
    Ok(out)
}

/// The quadratic-form matrix restricted to the indices where both `e` and
/// `C` are nonzero; everything outside that block is zero.
#[derive(Debug, Clone)]
pub struct RestrictedQuadForm {
    pub indices: Vec<usize>,
    pub matrix: Mat<C64>,
}

fn check_variances(c: &[f64], q: usize) -> Result<()> {
    if c.len() != q {
        return Err(Error::Dimension {
            what: "RCS variance vector length vs grid size",
            expected: q,
            got: c.len(),
        });
    }
    if let Some(v) = c.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::domain(format!("RCS variances must be finite and >= 0, got {v}")));
    }
    Ok(())
}

pub fn quad_form_matrix(e: &ErrorSequence, a: MatRef<'_, C64>, c: &[f64]) -> Result<RestrictedQuadForm> {
    check_variances(c, a.ncols())?;
    if e.grid_len != a.ncols() {
        return Err(Error::Dimension {
            what: "error-sequence length vs sensing-matrix columns",
            expected: a.ncols(),
            got: e.grid_len,
        });
    }
    let mut signed: Vec<(usize, f64)> = e
        .removed
        .iter()
        .map(|&i| (i, 1.0))
        .chain(e.added.iter().map(|&i| (i, -1.0)))
        .filter(|&(i, _)| c[i] > 0.0)
        .collect();
    signed.sort_by_key(|&(i, _)| i);
    let indices: Vec<usize> = signed.iter().map(|&(i, _)| i).collect();
    let scale: Vec<f64> = signed.iter().map(|&(i, s)| s * c[i].sqrt()).collect();
    let cols = select_columns(a, &indices);
    let gram = cols.adjoint() * &cols;
    let matrix = Mat::from_fn(indices.len(), indices.len(), |r, k| gram[(r, k)] * (scale[r] * scale[k]));
    Ok(RestrictedQuadForm { indices, matrix })
}

/// Eigenvalues of a Hermitian PSD block, with the ones under the rank
/// threshold dropped.
pub fn nonzero_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    let eig = hermitian_eigenvalues(m)?;
    let max = eig.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    Ok(eig.into_iter().filter(|&l| l > RANK_RATIO * max).collect())
}

pub fn upep_from_eigenvalues(eigenvalues: &[f64], noise_power: f64) -> f64 {
    eigenvalues.iter().map(|l| 1.0 / (1.0 + l / (4.0 * noise_power))).product()
}

fn check_noise(noise_power: f64) -> Result<()> {
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(Error::domain(format!("noise power must be > 0, got {noise_power}")));
    }
    Ok(())
}

pub fn upep(e: &ErrorSequence, a: MatRef<'_, C64>, c: &[f64], noise_power: f64) -> Result<f64> {
    check_noise(noise_power)?;
    let form = quad_form_matrix(e, a, c)?;
    Ok(upep_from_eigenvalues(&nonzero_eigenvalues(form.matrix.as_ref())?, noise_power))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepRecord {
    pub error: ErrorSequence,
    pub eigenvalues: Vec<f64>,
    pub upep: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepReport {
    pub records: Vec<PepRecord>,
    pub union_bound: f64,
    pub enumeration_order: usize,
    pub noise_power: f64,
}

/// Gram matrix of the columns where `C` is nonzero; every restricted block
/// is a principal submatrix of it, scaled.
struct SupportGram {
    position: Vec<Option<usize>>,
    sqrt_c: Vec<f64>,
    gram: Mat<C64>,
}

impl SupportGram {
    fn new(a: MatRef<'_, C64>, c: &[f64]) -> Self {
        let support: Vec<usize> = (0..c.len()).filter(|&i| c[i] > 0.0).collect();
        let mut position = vec![None; c.len()];
        for (p, &i) in support.iter().enumerate() {
            position[i] = Some(p);
        }
        let cols = select_columns(a, &support);
        SupportGram {
            position,
            sqrt_c: support.iter().map(|&i| c[i].sqrt()).collect(),
            gram: cols.adjoint() * &cols,
        }
    }

    fn eigenvalues(&self, e: &ErrorSequence) -> Result<Vec<f64>> {
        let mut block: Vec<(usize, f64)> = e
            .removed
            .iter()
            .map(|&i| (i, 1.0))
            .chain(e.added.iter().map(|&i| (i, -1.0)))
            .filter_map(|(i, s)| self.position[i].map(|p| (p, s * self.sqrt_c[p])))
            .collect();
        block.sort_by_key(|&(p, _)| p);
        match block.len() {
            0 => Ok(Vec::new()),
            1 => {
                let (p, s) = block[0];
                let l = self.gram[(p, p)].re * s * s;
                Ok(if l > 0.0 { vec![l] } else { Vec::new() })
            }
            n => {
                let m = Mat::from_fn(n, n, |r, k| self.gram[(block[r].0, block[k].0)] * (block[r].1 * block[k].1));
                nonzero_eigenvalues(m.as_ref())
            }
        }
    }
}

fn check_support(q: &SupportHypothesis, a: MatRef<'_, C64>, c: &[f64]) -> Result<()> {
    check_variances(c, a.ncols())?;
    if q.len() != a.ncols() {
        return Err(Error::Dimension {
            what: "support length vs sensing-matrix columns",
            expected: a.ncols(),
            got: q.len(),
        });
    }
    Ok(())
}

/// Per-sequence bounds and their sum over all errors up to `order`.
pub fn pep_report(
    q: &SupportHypothesis,
    a: MatRef<'_, C64>,
    c: &[f64],
    noise_power: f64,
    order: usize,
) -> Result<PepReport> {
    check_noise(noise_power)?;
    check_support(q, a, c)?;
    let gram = SupportGram::new(a, c);
    let records = enumerate_errors(q, order)?
        .into_par_iter()
        .map(|error| {
            let eigenvalues = gram.eigenvalues(&error)?;
            let upep = upep_from_eigenvalues(&eigenvalues, noise_power);
            Ok(PepRecord {
                error,
                eigenvalues,
                upep,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let union_bound = records.iter().map(|r| r.upep).sum();
    Ok(PepReport {
        records,
        union_bound,
        enumeration_order: order,
        noise_power,
    })
}

/// Sum of the pairwise bounds over all errors up to `order`. May exceed one.
pub fn union_bound(
    q: &SupportHypothesis,
    a: MatRef<'_, C64>,
    c: &[f64],
    noise_power: f64,
    order: usize,
) -> Result<f64> {
    check_noise(noise_power)?;
    check_support(q, a, c)?;
    let gram = SupportGram::new(a, c);
    let terms = enumerate_errors(q, order)?
        .par_iter()
        .map(|e| Ok(upep_from_eigenvalues(&gram.eigenvalues(e)?, noise_power)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum())
}

/// Monte Carlo estimate of E[exp(-g^H A~ g / (4 N0))] with g ~ CN(0, I) on
/// the restricted block. Returns the sample mean and its standard error.
pub fn mc_validate_upep<R: Rng + ?Sized>(
    e: &ErrorSequence,
    a: MatRef<'_, C64>,
    c: &[f64],
    noise_power: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_noise(noise_power)?;
    if samples < 1000 {
        return Err(Error::config(format!("mc_validate_upep needs >= 1000 samples, got {samples}")));
    }
    let form = quad_form_matrix(e, a, c)?;
    mc_quad_form(form.matrix.as_ref(), noise_power, samples, rng)
}

pub(crate) fn mc_quad_form<R: Rng + ?Sized>(
    m: MatRef<'_, C64>,
    noise_power: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let r = m.nrows();
    let mut g = vec![C64::new(0.0, 0.0); r];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for v in g.iter_mut() {
            *v = complex_normal(rng, 1.0);
        }
        let mut quad = 0.0;
        for i in 0..r {
            let row: C64 = (0..r).map(|k| m[(i, k)] * g[k]).sum();
            quad += (g[i].conj() * row).re;
        }
        let x = (-quad / (4.0 * noise_power)).exp();
        sum += x;
        sum_sq += x * x;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}
