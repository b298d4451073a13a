//! Turning a learned grid field into target locations, and scoring them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{distance, GridSpec, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    TopL,
    Cfar { pfa: f64, guard: usize, train: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMethod {
    TopL,
    Cfar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub locations: Vec<Point2>,
    pub indices: Vec<usize>,
    /// Field values at `indices`, descending.
    pub scores: Vec<f64>,
    pub method: DetectionMethod,
}

impl DetectionResult {
    fn from_indices(mut indices: Vec<usize>, field: &[f64], grid: &GridSpec, method: DetectionMethod) -> Self {
        indices.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
        DetectionResult {
            locations: indices.iter().map(|&q| grid.point(q)).collect(),
            scores: indices.iter().map(|&q| field[q]).collect(),
            indices,
            method,
        }
    }
}

fn check_field(field: &[f64], grid: &GridSpec) -> Result<()> {
    if field.len() != grid.len() {
        return Err(Error::Dimension {
            what: "field length vs grid size",
            expected: grid.len(),
            got: field.len(),
        });
    }
    Ok(())
}

/// The `l` largest entries; ties go to the smaller index.
pub fn top_l(field: &[f64], grid: &GridSpec, l: usize) -> Result<DetectionResult> {
    check_field(field, grid)?;
    if l == 0 || l > field.len() {
        return Err(Error::config(format!(
            "top_l needs 1 <= L <= Q (L = {l}, Q = {})",
            field.len()
        )));
    }
    let mut order: Vec<usize> = (0..field.len()).collect();
    order.sort_by(|&a, &b| field[b].total_cmp(&field[a]).then(a.cmp(&b)));
    order.truncate(l);
    Ok(DetectionResult::from_indices(order, field, grid, DetectionMethod::TopL))
}

/// Cell-averaging CFAR scale factor for `n` training cells.
pub fn ca_cfar_alpha(pfa: f64, n: usize) -> f64 {
    let n = n as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

/// 2D cell-averaging CFAR with a square guard/training ring and a local-max
/// gate over the full window.
///
/// A cell is declared when its value exceeds alpha times the mean of its
/// training ring and no other cell in its (2(guard+train)+1)^2 window beats
/// it (equal values resolve to the smaller index). Near the border the ring
/// is truncated to the cells inside the grid and alpha is recomputed for the
/// reduced count.
pub fn cfar_detect(field: &[f64], grid: &GridSpec, pfa: f64, guard: usize, train: usize) -> Result<DetectionResult> {
    check_field(field, grid)?;
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::config(format!("cfar pfa must be in (0, 1), got {pfa}")));
    }
    if train == 0 {
        return Err(Error::config("cfar train must be >= 1"));
    }
    let half = guard + train;
    let span = 2 * half + 1;
    if span > grid.nx || span > grid.ny {
        return Err(Error::config(format!(
            "cfar window {span}x{span} larger than grid {}x{}",
            grid.nx, grid.ny
        )));
    }
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let h = half as isize;
    let g = guard as isize;
    let mut hits = Vec::new();
    for q in 0..field.len() {
        let (ix, iy) = grid.coords(q);
        let (ix, iy) = (ix as isize, iy as isize);
        let value = field[q];
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut is_peak = true;
        for dy in -h..=h {
            let y = iy + dy;
            if y < 0 || y >= ny {
                continue;
            }
            for dx in -h..=h {
                let x = ix + dx;
                if x < 0 || x >= nx || (dx == 0 && dy == 0) {
                    continue;
                }
                let other = (y * nx + x) as usize;
                let v = field[other];
                if v > value || (v == value && other < q) {
                    is_peak = false;
                }
                if dx.abs() > g || dy.abs() > g {
                    sum += v;
                    count += 1;
                }
            }
        }
        if !is_peak || count == 0 {
            continue;
        }
        let threshold = ca_cfar_alpha(pfa, count) * sum / count as f64;
        if value > threshold {
            hits.push(q);
        }
    }
    Ok(DetectionResult::from_indices(hits, field, grid, DetectionMethod::Cfar))
}

/// Dispatches on the configured detector; `l` is the known target count.
pub fn detect(field: &[f64], grid: &GridSpec, detector: &Detector, l: usize) -> Result<DetectionResult> {
    match *detector {
        Detector::TopL => top_l(field, grid, l.min(field.len())),
        Detector::Cfar { pfa, guard, train } => cfar_detect(field, grid, pfa, guard, train),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mdr: f64,
    pub far: f64,
    /// Assignment distance in meters, when it was computed.
    pub mse: Option<f64>,
    pub missed: usize,
    pub ghost: usize,
    pub total: usize,
}

/// Exact-index scoring of an on-grid detection.
pub fn score_on_grid(truth: &[usize], detected: &[usize], total: usize) -> MetricReport {
    let missed = truth.iter().filter(|t| !detected.contains(t)).count();
    let ghost = detected.iter().filter(|d| !truth.contains(d)).count();
    let (mdr, far) = if total == 0 {
        (0.0, 0.0)
    } else {
        (missed as f64 / total as f64, ghost as f64 / total as f64)
    };
    MetricReport {
        mdr,
        far,
        mse: None,
        missed,
        ghost,
        total,
    }
}

/// Mean Euclidean distance under the best one-to-one assignment of `est` to
/// `truth`.
pub fn mse_locations(truth: &[Point2], est: &[Point2]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::Dimension {
            what: "estimated vs true location count",
            expected: truth.len(),
            got: est.len(),
        });
    }
    if truth.is_empty() {
        return Ok(0.0);
    }
    let cost: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| est.iter().map(|e| distance(*t, *e)).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let total: f64 = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    Ok(total / truth.len() as f64)
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on a
/// square cost matrix. Returns the column assigned to each row.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost[r - 1][c - 1] - u[r] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for c in 1..=n {
        if owner[c] > 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}
