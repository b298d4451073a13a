//! Global 2D geometry: radio units, point targets, the sensing grid, and the
//! per-path quantities (distances, angles, bistatic delay and pathloss) that
//! every other module derives its responses from.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

/// A radio unit with a half-wavelength ULA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuConfig {
    pub position: Point2,
    /// Unit vector along the array normal.
    pub boresight: Point2,
    pub num_antennas: usize,
    pub num_beams: usize,
    /// Total transmit power P_k in watts.
    pub tx_power: f64,
}

impl RuConfig {
    pub fn new(
        position: Point2,
        boresight: Point2,
        num_antennas: usize,
        num_beams: usize,
        tx_power: f64,
    ) -> Result<Self> {
        if (boresight.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "boresight must be a unit vector, got norm {}",
                boresight.norm()
            )));
        }
        if num_beams == 0 || num_beams >= num_antennas {
            return Err(Error::config(format!(
                "num_beams must satisfy 1 <= Z < M (Z = {num_beams}, M = {num_antennas})"
            )));
        }
        if !(tx_power > 0.0) || !tx_power.is_finite() {
            return Err(Error::config(format!("tx_power must be positive, got {tx_power}")));
        }
        Ok(RuConfig {
            position,
            boresight,
            num_antennas,
            num_beams,
            tx_power,
        })
    }

    /// Builds an RU whose boresight points at `aim`.
    pub fn aimed_at(
        position: Point2,
        aim: Point2,
        num_antennas: usize,
        num_beams: usize,
        tx_power: f64,
    ) -> Result<Self> {
        let dir = aim - position;
        let n = dir.norm();
        if n == 0.0 {
            return Err(Error::config("RU cannot be aimed at its own position"));
        }
        Self::new(position, dir * (1.0 / n), num_antennas, num_beams, tx_power)
    }

    pub fn with_tx_power(&self, tx_power: f64) -> Result<Self> {
        Self::new(
            self.position,
            self.boresight,
            self.num_antennas,
            self.num_beams,
            tx_power,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub position: Point2,
    /// Variance of the complex reflection coefficient (linear units).
    pub rcs: f64,
}

impl Target {
    pub fn new(position: Point2, rcs: f64) -> Result<Self> {
        if !(rcs >= 0.0) {
            return Err(Error::config(format!("target rcs must be >= 0, got {rcs}")));
        }
        Ok(Target { position, rcs })
    }
}

/// Rectangular sensing grid with endpoint-inclusive uniform spacing.
///
/// Point `q = iy * nx + ix` (ix fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub corner_min: Point2,
    pub corner_max: Point2,
    pub nx: usize,
    pub ny: usize,
    points: Vec<Point2>,
}

impl GridSpec {
    pub fn new(corner_min: Point2, corner_max: Point2, nx: usize, ny: usize) -> Result<Self> {
        let points = build_grid(corner_min, corner_max, nx, ny)?;
        Ok(GridSpec {
            corner_min,
            corner_max,
            nx,
            ny,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn point(&self, q: usize) -> Point2 {
        self.points[q]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    /// (ix, iy) of grid index `q`.
    pub fn coords(&self, q: usize) -> (usize, usize) {
        (q % self.nx, q / self.nx)
    }

    pub fn spacing(&self) -> (f64, f64) {
        let step = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        (
            step(self.corner_min.x, self.corner_max.x, self.nx),
            step(self.corner_min.y, self.corner_max.y, self.ny),
        )
    }

    /// Index of the grid point closest to `p` (ties to the smaller index).
    pub fn nearest_index(&self, p: Point2) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (q, g) in self.points.iter().enumerate() {
            let d = distance(*g, p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }
}

/// Row-major, endpoint-inclusive grid spanning `[corner_min, corner_max]`.
pub fn build_grid(corner_min: Point2, corner_max: Point2, nx: usize, ny: usize) -> Result<Vec<Point2>> {
    if nx == 0 || ny == 0 {
        return Err(Error::config(format!("grid dimensions must be >= 1 (nx = {nx}, ny = {ny})")));
    }
    if !(corner_min.x < corner_max.x && corner_min.y < corner_max.y) {
        return Err(Error::config(format!(
            "grid corner_min {corner_min:?} must be below corner_max {corner_max:?} in both axes"
        )));
    }
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let step = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
            .collect()
    };
    let xs = axis(corner_min.x, corner_max.x, nx);
    let ys = axis(corner_min.y, corner_max.y, ny);
    let mut points = Vec::with_capacity(nx * ny);
    for &y in &ys {
        for &x in &xs {
            points.push(Point2::new(x, y));
        }
    }
    Ok(points)
}

/// The global world: RUs, targets, grid and OFDM numerology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub rus: Vec<RuConfig>,
    pub targets: Vec<Target>,
    pub grid: GridSpec,
    pub carrier_freq: f64,
    pub num_subcarriers: usize,
    pub subcarrier_spacing: f64,
    pub noise_power: f64,
    pub num_slots: usize,
}

impl Scene {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rus: Vec<RuConfig>,
        targets: Vec<Target>,
        grid: GridSpec,
        carrier_freq: f64,
        num_subcarriers: usize,
        subcarrier_spacing: f64,
        noise_power: f64,
        num_slots: usize,
    ) -> Result<Self> {
        if rus.is_empty() {
            return Err(Error::config("scene needs at least one RU"));
        }
        if !(carrier_freq > 0.0) {
            return Err(Error::config("carrier_freq must be positive"));
        }
        if num_subcarriers == 0 || num_slots == 0 {
            return Err(Error::config("num_subcarriers and num_slots must be >= 1"));
        }
        if !(subcarrier_spacing > 0.0) {
            return Err(Error::config("subcarrier_spacing must be positive"));
        }
        if !(noise_power >= 0.0) {
            return Err(Error::config("noise_power must be >= 0"));
        }
        for (i, a) in rus.iter().enumerate() {
            if rus[..i].iter().any(|b| b.position == a.position) {
                return Err(Error::config(format!("duplicate RU position {:?}", a.position)));
            }
        }
        let scene = Scene {
            rus,
            targets: Vec::new(),
            grid,
            carrier_freq,
            num_subcarriers,
            subcarrier_spacing,
            noise_power,
            num_slots,
        };
        scene.with_targets(targets)
    }

    /// Same scene with a different target set.
    pub fn with_targets(&self, targets: Vec<Target>) -> Result<Self> {
        for (i, a) in targets.iter().enumerate() {
            if targets[..i].iter().any(|b| b.position == a.position) {
                return Err(Error::config(format!("duplicate target position {:?}", a.position)));
            }
        }
        Ok(Scene {
            targets,
            ..self.clone()
        })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn num_rus(&self) -> usize {
        self.rus.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.subcarrier_spacing * self.num_subcarriers as f64
    }
}

/// All per-path symbols for one (illuminator, receiver, point) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Angle of departure at the illuminator.
    pub aod: f64,
    /// Angle of arrival at the receiver.
    pub aoa: f64,
    pub delay: f64,
    pub pathloss: f64,
    pub beam_gain: Option<C64>,
}

impl PathParams {
    pub fn new(illuminator: &RuConfig, receiver: &RuConfig, point: Point2, wavelength: f64) -> Result<Self> {
        Ok(PathParams {
            aod: relative_angle(illuminator, point)?,
            aoa: relative_angle(receiver, point)?,
            delay: bistatic_delay(illuminator, receiver, point),
            pathloss: bistatic_pathloss(illuminator, receiver, point, wavelength)?,
            beam_gain: None,
        })
    }
}

pub fn distance(p: Point2, q: Point2) -> f64 {
    (p - q).norm()
}

/// Signed angle from `ru.boresight` to the direction of `point`, CCW positive, in (-pi, pi].
pub fn relative_angle(ru: &RuConfig, point: Point2) -> Result<f64> {
    let dir = point - ru.position;
    if dir.norm() == 0.0 {
        return Err(Error::domain(format!(
            "angle undefined: point {point:?} coincides with RU at {:?}",
            ru.position
        )));
    }
    let angle = ru.boresight.cross(dir).atan2(ru.boresight.dot(dir));
    // atan2 returns [-pi, pi]; fold -pi onto +pi.
    Ok(if angle == -PI { PI } else { angle })
}

/// (d_i + d_k) / c0.
pub fn bistatic_delay(illuminator: &RuConfig, receiver: &RuConfig, point: Point2) -> f64 {
    (distance(illuminator.position, point) + distance(receiver.position, point)) / SPEED_OF_LIGHT
}

/// Radar-equation pathloss lambda^2 / ((4 pi)^3 d_i^2 d_k^2).
pub fn bistatic_pathloss(
    illuminator: &RuConfig,
    receiver: &RuConfig,
    point: Point2,
    wavelength: f64,
) -> Result<f64> {
    let di = distance(illuminator.position, point);
    let dk = distance(receiver.position, point);
    if di == 0.0 || dk == 0.0 {
        return Err(Error::domain(format!(
            "pathloss singular: point {point:?} coincides with an RU"
        )));
    }
    Ok(wavelength * wavelength / ((4.0 * PI).powi(3) * di * di * dk * dk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ru(x: f64, y: f64, bx: f64, by: f64) -> RuConfig {
        RuConfig::aimed_at(Point2::new(x, y), Point2::new(x + bx, y + by), 16, 10, 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(Point2::new(0.0, 0.0), Point2::new(3.0, 4.0)), 5.0);
        assert_eq!(distance(Point2::new(7.0, -2.0), Point2::new(7.0, -2.0)), 0.0);
        assert_eq!(distance(Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)), 100.0);
    }

    #[test]
    fn relative_angle_examples() {
        let r = ru(0.0, 0.0, 1.0, 0.0);
        assert_eq!(relative_angle(&r, Point2::new(5.0, 0.0)).unwrap(), 0.0);
        assert!((relative_angle(&r, Point2::new(0.0, 5.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((relative_angle(&r, Point2::new(0.0, -5.0)).unwrap() + PI / 2.0).abs() < 1e-15);
        assert_eq!(relative_angle(&r, Point2::new(-5.0, 0.0)).unwrap(), PI);

        let aim = Point2::new(50.0, 28.867);
        let r = RuConfig::aimed_at(Point2::new(0.0, 0.0), aim, 16, 10, 1.0).unwrap();
        assert!(relative_angle(&r, aim).unwrap().abs() < 1e-15);

        assert!(matches!(relative_angle(&r, Point2::new(0.0, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn delay_examples() {
        let a = ru(0.0, 0.0, 1.0, 0.0);
        let b = ru(2.0 * 149.896229, 0.0, -1.0, 0.0);
        let tau = bistatic_delay(&a, &b, Point2::new(149.896229, 0.0));
        assert!((tau - 1e-6).abs() < 1e-18);

        assert_eq!(bistatic_delay(&a, &a, Point2::new(0.0, 0.0)), 0.0);

        let b = ru(100.0, 0.0, -1.0, 0.0);
        let tau = bistatic_delay(&a, &b, Point2::new(50.0, 86.0));
        let expected = 2.0 * (50.0f64 * 50.0 + 86.0 * 86.0).sqrt() / SPEED_OF_LIGHT;
        assert!((tau - expected).abs() <= 1e-15 * expected);
    }

    #[test]
    fn pathloss_examples() {
        let lambda = SPEED_OF_LIGHT / 10e9;
        let a = ru(0.0, 0.0, 1.0, 0.0);
        let b = ru(2.0, 0.0, -1.0, 0.0);
        let p = Point2::new(1.0, 0.0);
        let d = bistatic_pathloss(&a, &b, p, lambda).unwrap();
        // lambda^2 / (4 pi)^3 evaluated independently.
        assert!((d - 4.529_2e-7).abs() < 1e-10, "{d}");

        let b2 = ru(4.0, 0.0, -1.0, 0.0);
        let d2 = bistatic_pathloss(&a, &b2, Point2::new(2.0, 0.0), lambda).unwrap();
        assert!((d2 - d / 16.0).abs() < 1e-22);

        let d3 = bistatic_pathloss(&a, &b, p, 2.0 * lambda).unwrap();
        assert!((d3 - 4.0 * d).abs() < 1e-20);

        assert!(bistatic_pathloss(&a, &b, Point2::new(0.0, 0.0), lambda).is_err());
    }

    #[test]
    fn grid_examples() {
        let g = GridSpec::new(Point2::new(25.0, 20.0), Point2::new(75.0, 70.0), 20, 20).unwrap();
        assert_eq!(g.len(), 400);
        let (sx, sy) = g.spacing();
        assert!((sx - 50.0 / 19.0).abs() < 1e-15 && (sy - 50.0 / 19.0).abs() < 1e-15);
        assert_eq!(g.point(0), Point2::new(25.0, 20.0));
        assert_eq!(g.point(399), Point2::new(75.0, 70.0));

        let g = GridSpec::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 2, 2).unwrap();
        assert_eq!(
            g.points(),
            &[
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
                Point2::new(1.0, 1.0)
            ]
        );

        let g = GridSpec::new(Point2::new(25.0, 20.0), Point2::new(75.0, 70.0), 40, 40).unwrap();
        assert_eq!(g.len(), 1600);
        assert!((g.spacing().0 - 50.0 / 39.0).abs() < 1e-15);

        assert!(GridSpec::new(Point2::new(1.0, 0.0), Point2::new(1.0, 1.0), 2, 2).is_err());
        assert!(GridSpec::new(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0), 0, 2).is_err());
    }

    #[test]
    fn ru_invariants() {
        let p = Point2::new(0.0, 0.0);
        assert!(RuConfig::new(p, Point2::new(1.0, 0.0), 16, 16, 1.0).is_err());
        assert!(RuConfig::new(p, Point2::new(1.0, 0.0), 16, 0, 1.0).is_err());
        assert!(RuConfig::new(p, Point2::new(2.0, 0.0), 16, 4, 1.0).is_err());
        assert!(RuConfig::new(p, Point2::new(1.0, 0.0), 16, 4, 0.0).is_err());
        assert!(Target::new(p, -1.0).is_err());
    }

    fn pt() -> impl Strategy<Value = Point2> {
        (-200.0..200.0f64, -200.0..200.0f64).prop_map(|(x, y)| Point2::new(x, y))
    }

    proptest! {
        #[test]
        fn distance_metric(a in pt(), b in pt(), c in pt()) {
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-12);
        }

        #[test]
        fn boresight_ray_has_zero_angle(pos in pt(), theta in -PI..PI, t in 0.01..500.0f64) {
            let r = RuConfig::new(pos, Point2::new(theta.cos(), theta.sin()), 8, 4, 1.0).unwrap();
            let a = relative_angle(&r, pos + r.boresight * t).unwrap();
            prop_assert!(a.abs() < 1e-9);
        }

        #[test]
        fn bistatic_swap_symmetry(a in pt(), b in pt(), p in pt()) {
            prop_assume!(distance(a, p) > 1e-3 && distance(b, p) > 1e-3 && distance(a, b) > 1e-3);
            let ra = RuConfig::new(a, Point2::new(1.0, 0.0), 8, 4, 1.0).unwrap();
            let rb = RuConfig::new(b, Point2::new(0.0, 1.0), 8, 4, 1.0).unwrap();
            prop_assert_eq!(bistatic_delay(&ra, &rb, p), bistatic_delay(&rb, &ra, p));
            let d1 = bistatic_pathloss(&ra, &rb, p, 0.03).unwrap();
            let d2 = bistatic_pathloss(&rb, &ra, p, 0.03).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-14 * d1);
        }

        #[test]
        fn grid_count_and_spacing(nx in 2usize..30, ny in 2usize..30, w in 1.0..100.0f64, h in 1.0..100.0f64) {
            let g = GridSpec::new(Point2::new(0.0, 0.0), Point2::new(w, h), nx, ny).unwrap();
            prop_assert_eq!(g.len(), nx * ny);
            let (sx, sy) = g.spacing();
            prop_assert!((sx - w / (nx - 1) as f64).abs() <= 1e-12 * w);
            prop_assert!((sy - h / (ny - 1) as f64).abs() <= 1e-12 * h);
            let dx = g.point(1).x - g.point(0).x;
            let dy = g.point(nx).y - g.point(0).y;
            prop_assert!((dx - sx).abs() <= 1e-12 * w && (dy - sy).abs() <= 1e-12 * h);
            for p in g.points() {
                prop_assert!(p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h);
            }
        }
    }
}
