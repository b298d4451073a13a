//! Dense complex helpers written independently of the library's faer paths.
#![allow(dead_code)]

use cfsense::C64;
use faer::Mat;
use rand::Rng;
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<C64>>;

pub fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn random_dense<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Dense {
    (0..rows).map(|_| (0..cols).map(|_| cn(rng, 1.0)).collect()).collect()
}

pub fn random_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n).map(|_| cn(rng, 1.0)).collect()
}

pub fn to_mat(d: &Dense) -> Mat<C64> {
    let cols = d.first().map_or(0, |r| r.len());
    Mat::from_fn(d.len(), cols, |r, c| d[r][c])
}

pub fn from_mat(m: faer::MatRef<'_, C64>) -> Dense {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

pub fn identity(n: usize) -> Dense {
    (0..n)
        .map(|r| (0..n).map(|c| if r == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).collect())
        .collect()
}

pub fn adjoint(a: &Dense) -> Dense {
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    (0..cols).map(|c| (0..rows).map(|r| a[r][c].conj()).collect()).collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|c| (0..inner).fold(C64::new(0.0, 0.0), |acc, k| acc + row[k] * b[k][c]))
                .collect()
        })
        .collect()
}

pub fn matvec(a: &Dense, x: &[C64]) -> Vec<C64> {
    a.iter()
        .map(|row| row.iter().zip(x).fold(C64::new(0.0, 0.0), |acc, (u, v)| acc + u * v))
        .collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn scale(a: &Dense, s: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

/// Gauss-Jordan with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a.clone();
    let mut inv = identity(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].norm().partial_cmp(&m[j][col].norm()).unwrap())
            .unwrap();
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col];
        assert!(p.norm() > 0.0, "singular matrix");
        for c in 0..n {
            m[col][c] /= p;
            inv[col][c] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r][col];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..n {
                let (mc, ic) = (m[col][c], inv[col][c]);
                m[r][c] -= f * mc;
                inv[r][c] -= f * ic;
            }
        }
    }
    inv
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(a: &Dense) -> C64 {
    let n = a.len();
    let mut m = a.clone();
    let mut det = C64::new(1.0, 0.0);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].norm().partial_cmp(&m[j][col].norm()).unwrap())
            .unwrap();
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        let p = m[col][col];
        if p.norm() == 0.0 {
            return C64::new(0.0, 0.0);
        }
        det *= p;
        for r in col + 1..n {
            let f = m[r][col] / p;
            for c in col..n {
                let v = m[col][c];
                m[r][c] -= f * v;
            }
        }
    }
    det
}

pub fn diag(values: &[f64]) -> Dense {
    let n = values.len();
    (0..n)
        .map(|r| (0..n).map(|c| if r == c { C64::new(values[r], 0.0) } else { C64::new(0.0, 0.0) }).collect())
        .collect()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn flatten(a: &Dense) -> Vec<C64> {
    a.iter().flatten().copied().collect()
}

use cfsense::forward::IlluminationSchedule;
use cfsense::scene::{GridSpec, Point2, RuConfig, Scene, Target};

/// RUs spread on a circle of radius 90 m around (50, 50), aimed at the
/// centre, looking at a square grid inside [20, 80]^2.
pub struct SceneDims {
    pub rus: usize,
    pub antennas: usize,
    pub beams: usize,
    pub subcarriers: usize,
    pub nx: usize,
    pub ny: usize,
}

pub fn ring_scene<R: Rng + ?Sized>(rng: &mut R, dims: &SceneDims) -> (Scene, IlluminationSchedule) {
    let centre = Point2::new(50.0, 50.0);
    let offset: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let rus = (0..dims.rus)
        .map(|k| {
            let phi = offset + std::f64::consts::TAU * k as f64 / dims.rus as f64 + rng.gen_range(-0.2..0.2);
            let pos = Point2::new(centre.x + 90.0 * phi.cos(), centre.y + 90.0 * phi.sin());
            RuConfig::aimed_at(pos, centre, dims.antennas, dims.beams, rng.gen_range(0.5..2.0)).unwrap()
        })
        .collect();
    let grid = GridSpec::new(Point2::new(20.0, 20.0), Point2::new(80.0, 80.0), dims.nx, dims.ny).unwrap();
    let scene = Scene::new(rus, Vec::new(), grid, 10e9, dims.subcarriers, 10e6, 1.0, dims.rus).unwrap();
    let schedule = IlluminationSchedule::round_robin(dims.rus, dims.rus).unwrap();
    (scene, schedule)
}

/// Places targets exactly on the given grid points.
pub fn on_grid_targets(scene: &Scene, indices: &[usize], rcs: f64) -> Scene {
    let targets = indices
        .iter()
        .map(|&q| Target::new(scene.grid.point(q), rcs).unwrap())
        .collect();
    scene.with_targets(targets).unwrap()
}
