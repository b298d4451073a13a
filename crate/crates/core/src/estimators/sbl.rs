//! Sparse Bayesian learning by expectation-maximization.
//!
//! Model: y = A rho + n, n ~ CN(0, N0 I), rho_i ~ CN(0, gamma_i) independent.
//! Inputs are whitened first so that the posterior takes the unit-noise form
//!
//!   Sigma = (A'^H A' + Gamma^-1)^-1,   mu = Sigma A'^H y'
//!
//! Two algebraically equivalent routes evaluate it. With `n` active
//! (nonzero-gamma) coordinates and `m` rows:
//!
//! * coefficient space, n <= m: factor B = I + D G D with G = A'^H A' and
//!   D = diag(sqrt(gamma)), then Sigma = D B^-1 D.
//! * row space, n > m: factor S = I + A' Gamma A'^H, then
//!   Sigma = Gamma - Gamma A'^H S^-1 A' Gamma.
//!
//! Both factor a matrix with unit-bounded-below spectrum, so a gamma close to
//! zero never has to be inverted.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{
    adjoint_apply, all_finite, cholesky, col_vec, llt_logdet, norm2_sqr, select_columns, ZERO,
};
use crate::C64;

/// Coordinates whose gamma falls below this fraction of the largest gamma are
/// pinned to zero.
pub const PRUNE_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SblOptions {
    pub max_iters: usize,
    pub stop_tol: f64,
    pub noise_power: f64,
    pub track_evidence: bool,
}

impl SblOptions {
    pub fn new(max_iters: usize, stop_tol: f64, noise_power: f64) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::config("sbl max_iters must be >= 1"));
        }
        if !(stop_tol > 0.0) {
            return Err(Error::config("sbl stop_tol must be > 0"));
        }
        if !(noise_power > 0.0) {
            return Err(Error::domain("sbl noise_power must be > 0"));
        }
        Ok(SblOptions {
            max_iters,
            stop_tol,
            noise_power,
            track_evidence: true,
        })
    }
}

impl Default for SblOptions {
    fn default() -> Self {
        SblOptions {
            max_iters: 200,
            stop_tol: 1e-4,
            noise_power: 1.0,
            track_evidence: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SblState {
    pub gamma: Vec<f64>,
    pub mu: Vec<C64>,
    /// Q x Q posterior covariance; rows/cols of pruned coordinates are zero.
    pub sigma: Mat<C64>,
    /// -log evidence (constant dropped) at every gamma the E-step was run on,
    /// including the trailing E-step.
    pub neg_log_evidence: Vec<f64>,
    /// Number of M-steps performed.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EStepRoute {
    Auto,
    CoefficientSpace,
    RowSpace,
}

/// Divides A and y by sqrt(N0).
pub fn whiten(a: MatRef<'_, C64>, y: &[C64], noise_power: f64) -> Result<(Mat<C64>, Vec<C64>)> {
    if !(noise_power > 0.0) || !noise_power.is_finite() {
        return Err(Error::domain(format!("noise power must be > 0, got {noise_power}")));
    }
    if y.len() != a.nrows() {
        return Err(Error::Dimension {
            what: "observation length vs sensing-matrix rows",
            expected: a.nrows(),
            got: y.len(),
        });
    }
    let s = 1.0 / noise_power.sqrt();
    let a_w = Mat::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * s);
    let y_w = y.iter().map(|v| v * s).collect();
    Ok((a_w, y_w))
}

/// Unit-noise problem with cached A^H y and (lazily) the Gram matrix.
struct Problem<'a> {
    a: MatRef<'a, C64>,
    y: &'a [C64],
    ahy: Vec<C64>,
    y_norm2: f64,
    gram: Option<Mat<C64>>,
}

/// Posterior restricted to the active coordinates.
struct Posterior {
    active: Vec<usize>,
    mu: Vec<C64>,
    sigma_diag: Vec<f64>,
    sigma: Option<Mat<C64>>,
    /// log det(I + A' Gamma A'^H)
    logdet: f64,
    /// y'^H (I + A' Gamma A'^H)^-1 y'
    quad: f64,
}

impl<'a> Problem<'a> {
    fn new(a: MatRef<'a, C64>, y: &'a [C64]) -> Result<Self> {
        if y.len() != a.nrows() {
            return Err(Error::Dimension {
                what: "observation length vs sensing-matrix rows",
                expected: a.nrows(),
                got: y.len(),
            });
        }
        if !all_finite(a) || y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::numerical("non-finite entries in sensing matrix or observation"));
        }
        Ok(Problem {
            a,
            y,
            ahy: adjoint_apply(a, y),
            y_norm2: norm2_sqr(y),
            gram: None,
        })
    }

    fn posterior(&mut self, gamma: &[f64], route: EStepRoute, full: bool) -> Result<Posterior> {
        if gamma.len() != self.a.ncols() {
            return Err(Error::Dimension {
                what: "gamma length vs sensing-matrix columns",
                expected: self.a.ncols(),
                got: gamma.len(),
            });
        }
        if gamma.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::numerical("gamma must be finite and nonnegative"));
        }
        let active: Vec<usize> = (0..gamma.len()).filter(|&i| gamma[i] > 0.0).collect();
        if active.is_empty() {
            return Ok(Posterior {
                active,
                mu: Vec::new(),
                sigma_diag: Vec::new(),
                sigma: full.then(|| Mat::zeros(0, 0)),
                logdet: 0.0,
                quad: self.y_norm2,
            });
        }
        let use_rows = match route {
            EStepRoute::Auto => active.len() > self.a.nrows(),
            EStepRoute::CoefficientSpace => false,
            EStepRoute::RowSpace => true,
        };
        if use_rows {
            self.row_space(active, gamma, full)
        } else {
            self.coefficient_space(active, gamma, full)
        }
    }

    fn coefficient_space(&mut self, active: Vec<usize>, gamma: &[f64], full: bool) -> Result<Posterior> {
        let a = self.a;
        let gram = self.gram.get_or_insert_with(|| a.adjoint() * a);
        let n = active.len();
        let d: Vec<f64> = active.iter().map(|&i| gamma[i].sqrt()).collect();
        let mut b = Mat::from_fn(n, n, |r, c| gram[(active[r], active[c])] * (d[r] * d[c]));
        for i in 0..n {
            b[(i, i)] += 1.0;
        }
        let llt = cholesky(b.as_ref(), "I + D G D")?;
        let logdet = llt_logdet(&llt);
        let rhs = Mat::from_fn(n, 1, |r, _| self.ahy[active[r]] * d[r]);
        let u = llt.solve(&rhs);
        let mu: Vec<C64> = (0..n).map(|r| u[(r, 0)] * d[r]).collect();
        let explained: f64 = active
            .iter()
            .zip(&mu)
            .map(|(&i, m)| (self.ahy[i].conj() * m).re)
            .sum();
        let quad = (self.y_norm2 - explained).max(0.0);
        let binv = llt.inverse();
        let sigma_diag = (0..n).map(|r| (binv[(r, r)].re * d[r] * d[r]).max(0.0)).collect();
        let sigma = full.then(|| {
            let mut s = Mat::from_fn(n, n, |r, c| binv[(r, c)] * (d[r] * d[c]));
            symmetrize(&mut s);
            s
        });
        Ok(Posterior {
            active,
            mu,
            sigma_diag,
            sigma,
            logdet,
            quad,
        })
    }

    fn row_space(&mut self, active: Vec<usize>, gamma: &[f64], full: bool) -> Result<Posterior> {
        let m = self.a.nrows();
        let n = active.len();
        let d: Vec<f64> = active.iter().map(|&i| gamma[i].sqrt()).collect();
        let mut t = select_columns(self.a, &active);
        for (c, dc) in d.iter().enumerate() {
            for v in t.col_mut(c).iter_mut() {
                *v *= *dc;
            }
        }
        let mut s = &t * t.adjoint();
        for i in 0..m {
            s[(i, i)] += 1.0;
        }
        let llt = cholesky(s.as_ref(), "I + A Gamma A^H")?;
        let logdet = llt_logdet(&llt);
        // W = L^-1 T, z = L^-1 y
        llt.L().solve_lower_triangular_in_place(t.as_mut());
        let mut z = col_vec(self.y);
        llt.L().solve_lower_triangular_in_place(z.as_mut());
        let quad = (0..m).map(|r| z[(r, 0)].norm_sqr()).sum();
        let whz = t.adjoint() * &z;
        let mu: Vec<C64> = (0..n).map(|c| whz[(c, 0)] * d[c]).collect();
        let sigma_diag = (0..n)
            .map(|c| {
                let w2: f64 = t.col(c).iter().map(|v| v.norm_sqr()).sum();
                (gamma[active[c]] * (1.0 - w2)).max(0.0)
            })
            .collect();
        let sigma = full.then(|| {
            let whw = t.adjoint() * &t;
            let mut s = Mat::from_fn(n, n, |r, c| {
                let eye = if r == c { 1.0 } else { 0.0 };
                (C64::new(eye, 0.0) - whw[(r, c)]) * (d[r] * d[c])
            });
            symmetrize(&mut s);
            s
        });
        Ok(Posterior {
            active,
            mu,
            sigma_diag,
            sigma,
            logdet,
            quad,
        })
    }
}

fn symmetrize(s: &mut Mat<C64>) {
    let n = s.nrows();
    for r in 0..n {
        s[(r, r)] = C64::new(s[(r, r)].re, 0.0);
        for c in 0..r {
            let v = (s[(r, c)] + s[(c, r)].conj()) * 0.5;
            s[(r, c)] = v;
            s[(c, r)] = v.conj();
        }
    }
}

fn scatter(post: &Posterior, q: usize) -> (Vec<C64>, Mat<C64>) {
    let mut mu = vec![ZERO; q];
    let mut sigma = Mat::<C64>::zeros(q, q);
    for (r, &i) in post.active.iter().enumerate() {
        mu[i] = post.mu[r];
    }
    if let Some(s) = &post.sigma {
        for (r, &i) in post.active.iter().enumerate() {
            for (c, &j) in post.active.iter().enumerate() {
                sigma[(i, j)] = s[(r, c)];
            }
        }
    }
    (mu, sigma)
}

/// Posterior mean and covariance for whitened inputs. Coordinates with
/// gamma_i = 0 get mu_i = 0 and a zero row/column in Sigma.
pub fn sbl_e_step(a: MatRef<'_, C64>, y: &[C64], gamma: &[f64]) -> Result<(Vec<C64>, Mat<C64>)> {
    sbl_e_step_route(a, y, gamma, EStepRoute::Auto)
}

pub fn sbl_e_step_route(
    a: MatRef<'_, C64>,
    y: &[C64],
    gamma: &[f64],
    route: EStepRoute,
) -> Result<(Vec<C64>, Mat<C64>)> {
    let mut problem = Problem::new(a, y)?;
    let post = problem.posterior(gamma, route, true)?;
    Ok(scatter(&post, a.ncols()))
}

/// gamma_i = |mu_i|^2 + Sigma_ii
pub fn sbl_m_step(mu: &[C64], sigma: MatRef<'_, C64>) -> Vec<f64> {
    mu.iter()
        .enumerate()
        .map(|(i, m)| m.norm_sqr() + sigma[(i, i)].re.max(0.0))
        .collect()
}

/// log det(Sigma_y) + y^H Sigma_y^-1 y with Sigma_y = A Gamma A^H + N0 I,
/// evaluated directly in the row dimension.
pub fn neg_log_evidence(a: MatRef<'_, C64>, y: &[C64], gamma: &[f64], noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::domain(format!("noise power must be > 0, got {noise_power}")));
    }
    check_evidence_inputs(a, y, gamma)?;
    let m = a.nrows();
    let mut cov = Mat::<C64>::zeros(m, m);
    for (q, &g) in gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let col = a.col(q);
        for c in 0..m {
            let gc = col[c].conj() * g;
            for r in 0..m {
                cov[(r, c)] += col[r] * gc;
            }
        }
    }
    for i in 0..m {
        cov[(i, i)] += noise_power;
    }
    let llt = cholesky(cov.as_ref(), "Sigma_y")?;
    let mut z = col_vec(y);
    llt.L().solve_lower_triangular_in_place(z.as_mut());
    let quad: f64 = (0..m).map(|r| z[(r, 0)].norm_sqr()).sum();
    Ok(llt_logdet(&llt) + quad)
}

/// Same quantity through whitening, the determinant lemma and the matrix
/// inversion lemma in the coefficient dimension.
pub fn neg_log_evidence_woodbury(
    a: MatRef<'_, C64>,
    y: &[C64],
    gamma: &[f64],
    noise_power: f64,
) -> Result<f64> {
    check_evidence_inputs(a, y, gamma)?;
    let (a_w, y_w) = whiten(a, y, noise_power)?;
    let mut problem = Problem::new(a_w.as_ref(), &y_w)?;
    let post = problem.posterior(gamma, EStepRoute::CoefficientSpace, false)?;
    Ok(a.nrows() as f64 * noise_power.ln() + post.logdet + post.quad)
}

fn check_evidence_inputs(a: MatRef<'_, C64>, y: &[C64], gamma: &[f64]) -> Result<()> {
    if y.len() != a.nrows() {
        return Err(Error::Dimension {
            what: "observation length vs sensing-matrix rows",
            expected: a.nrows(),
            got: y.len(),
        });
    }
    if gamma.len() != a.ncols() {
        return Err(Error::Dimension {
            what: "gamma length vs sensing-matrix columns",
            expected: a.ncols(),
            got: gamma.len(),
        });
    }
    if gamma.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::domain("gamma must be nonnegative"));
    }
    Ok(())
}

/// EM iterations from gamma = 1 until the relative gamma change drops below
/// `stop_tol` or `max_iters` M-steps have run, followed by one E-step so
/// that the returned mu and Sigma belong to the returned gamma.
pub fn sbl_em(a: MatRef<'_, C64>, y: &[C64], opts: &SblOptions) -> Result<SblState> {
    let opts = SblOptions::new(opts.max_iters, opts.stop_tol, opts.noise_power)
        .map(|o| SblOptions {
            track_evidence: opts.track_evidence,
            ..o
        })?;
    if let Some(q) = (0..a.ncols()).find(|&q| a.col(q).iter().all(|v| *v == ZERO)) {
        return Err(Error::domain(format!("sensing matrix column {q} is identically zero")));
    }
    let (a_w, y_w) = whiten(a, y, opts.noise_power)?;
    let mut problem = Problem::new(a_w.as_ref(), &y_w)?;
    let q = a.ncols();
    let offset = a.nrows() as f64 * opts.noise_power.ln();

    let mut gamma = vec![1.0; q];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let post = problem.posterior(&gamma, EStepRoute::Auto, false)?;
        if opts.track_evidence {
            trace.push(offset + post.logdet + post.quad);
        }
        let mut next = vec![0.0; q];
        for (r, &i) in post.active.iter().enumerate() {
            next[i] = post.mu[r].norm_sqr() + post.sigma_diag[r];
        }
        prune(&mut next);
        iterations += 1;

        let old_norm = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        let diff = gamma
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        gamma = next;
        if old_norm == 0.0 || diff < opts.stop_tol * old_norm {
            converged = true;
            break;
        }
    }

    let post = problem.posterior(&gamma, EStepRoute::Auto, true)?;
    if opts.track_evidence {
        trace.push(offset + post.logdet + post.quad);
    }
    let (mu, sigma) = scatter(&post, q);
    Ok(SblState {
        gamma,
        mu,
        sigma,
        neg_log_evidence: trace,
        iterations,
        converged,
    })
}

fn prune(gamma: &mut [f64]) {
    let max = gamma.iter().cloned().fold(0.0, f64::max);
    let floor = PRUNE_RATIO * max;
    for g in gamma.iter_mut() {
        if *g < floor {
            *g = 0.0;
        }
    }
}
