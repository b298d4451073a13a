//! Experiment configuration: a TOML file with one table per concern.
//!
//! Every key is optional; anything left out takes the default listed on the
//! field. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detection::Detector;
use crate::error::{Error, Result};
use crate::forward::ScheduleKind;
use crate::scene::Point2;
use crate::waveform::BfPattern;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub scene: SceneSection,
    pub grid: GridSection,
    pub targets: TargetSection,
    pub schedule: ScheduleSection,
    pub beamforming: BeamformingSection,
    pub solver: SolverSection,
    pub detection: DetectionSection,
    pub sweep: SweepSection,
    pub pep: PepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            trials: 200,
            output_dir: PathBuf::from("out"),
            scene: SceneSection::default(),
            grid: GridSection::default(),
            targets: TargetSection::default(),
            schedule: ScheduleSection::default(),
            beamforming: BeamformingSection::default(),
            solver: SolverSection::default(),
            detection: DetectionSection::default(),
            sweep: SweepSection::default(),
            pep: PepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub carrier_freq: f64,
    pub num_subcarriers: usize,
    pub subcarrier_spacing: f64,
    /// N0 in watts; only read when the sweep lists absolute transmit powers.
    pub noise_power: f64,
    pub rus: Vec<RuSection>,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            carrier_freq: 10e9,
            num_subcarriers: 16,
            subcarrier_spacing: 10e6,
            noise_power: 1.0,
            rus: [[0.0, 0.0], [100.0, 0.0], [50.0, 86.0]]
                .into_iter()
                .map(|p| RuSection {
                    position: p,
                    ..RuSection::default()
                })
                .collect(),
        }
    }
}

/// One radio unit. Without `aim` or `boresight` the array faces the centroid
/// of all RUs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuSection {
    pub position: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aim: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boresight: Option<[f64; 2]>,
    pub num_antennas: usize,
    pub num_beams: usize,
}

impl Default for RuSection {
    fn default() -> Self {
        RuSection {
            position: [0.0, 0.0],
            aim: None,
            boresight: None,
            num_antennas: 16,
            num_beams: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            min: [25.0, 20.0],
            max: [75.0, 70.0],
            nx: 20,
            ny: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    OnGrid,
    OffGrid,
}

impl TargetMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetMode::OnGrid => "on_grid",
            TargetMode::OffGrid => "off_grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    pub mode: TargetMode,
    pub region_min: [f64; 2],
    pub region_max: [f64; 2],
    pub l_min: usize,
    pub l_max: usize,
    /// Fading variance gamma_l (linear).
    pub rcs: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection {
            mode: TargetMode::OnGrid,
            region_min: [25.0, 20.0],
            region_max: [75.0, 70.0],
            l_min: 3,
            l_max: 7,
            rcs: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// "round_robin" or "custom".
    pub kind: String,
    /// Per-slot transmitter sets for "custom"; every other RU receives.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transmitters: Option<Vec<Vec<usize>>>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            kind: "round_robin".into(),
            transmitters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamformingSection {
    pub pattern: OneOrMany<BfPattern>,
}

impl Default for BeamformingSection {
    fn default() -> Self {
        BeamformingSection {
            pattern: OneOrMany::Many(vec![BfPattern::Equal, BfPattern::Random]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Sbl,
    Omp,
}

impl Solver {
    pub fn as_str(self) -> &'static str {
        match self {
            Solver::Sbl => "sbl",
            Solver::Omp => "omp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub methods: Vec<Solver>,
    pub max_iters: usize,
    pub stop_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            methods: vec![Solver::Sbl, Solver::Omp],
            max_iters: 200,
            stop_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMethod {
    TopL,
    Cfar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSection {
    pub method: DetectionMethod,
    pub pfa: f64,
    pub guard: usize,
    pub train: usize,
}

impl Default for DetectionSection {
    fn default() -> Self {
        DetectionSection {
            method: DetectionMethod::TopL,
            pfa: 1e-5,
            guard: 1,
            train: 2,
        }
    }
}

impl DetectionSection {
    pub fn detector(&self) -> Detector {
        match self.method {
            DetectionMethod::TopL => Detector::TopL,
            DetectionMethod::Cfar => Detector::Cfar {
                pfa: self.pfa,
                guard: self.guard,
                train: self.train,
            },
        }
    }
}

/// Sweep axis. `snr_db` is the per-subcarrier transmit-power-to-noise ratio
/// with N0 = 1; `tx_power_w` instead lists absolute per-RU powers used with
/// `scene.noise_power`. Give at most one of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tx_power_w: Option<Vec<f64>>,
    /// Drop the receiver noise from the observations; the solver then assumes
    /// N0 = 1e-12 times the mean per-entry signal power.
    pub noise_free: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            snr_db: None,
            tx_power_w: None,
            noise_free: false,
        }
    }
}

pub const DEFAULT_SNR_DB: [f64; 5] = [90.0, 95.0, 100.0, 105.0, 110.0];

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PepSection {
    /// Substitution order of the union bound; absent means no bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
}

/// One point of the sweep: per-RU transmit power and noise power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub tx_power: f64,
    pub noise_power: f64,
}

/// N0 = 1 and P chosen so that 10 log10(P / (N N0)) = `snr_db`.
pub fn snr_to_power(snr_db: f64, config: &ExperimentConfig) -> (f64, f64) {
    let noise_power = 1.0;
    let n = config.scene.num_subcarriers as f64;
    (n * noise_power * 10f64.powf(snr_db / 10.0), noise_power)
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be a positive number, got {v}")))
    }
}

fn corners(key_min: &str, min: [f64; 2], max: [f64; 2]) -> Result<()> {
    if min.iter().chain(&max).any(|v| !v.is_finite()) || !(min[0] < max[0] && min[1] < max[1]) {
        return Err(bad(key_min, format!("corners {min:?} / {max:?} do not span a rectangle")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        match (&self.sweep.snr_db, &self.sweep.tx_power_w) {
            (_, Some(powers)) => {
                let n0 = self.scene.noise_power;
                let n = self.scene.num_subcarriers as f64;
                powers
                    .iter()
                    .map(|&p| SweepPoint {
                        snr_db: 10.0 * (p / (n * n0)).log10(),
                        tx_power: p,
                        noise_power: n0,
                    })
                    .collect()
            }
            (snr, None) => snr
                .as_deref()
                .unwrap_or(&DEFAULT_SNR_DB)
                .iter()
                .map(|&s| {
                    let (tx_power, noise_power) = snr_to_power(s, self);
                    SweepPoint {
                        snr_db: s,
                        tx_power,
                        noise_power,
                    }
                })
                .collect(),
        }
    }

    pub fn patterns(&self) -> Vec<BfPattern> {
        self.beamforming.pattern.to_vec()
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind> {
        match (self.schedule.kind.as_str(), &self.schedule.transmitters) {
            ("round_robin", None) => Ok(ScheduleKind::RoundRobin),
            ("round_robin", Some(_)) => Err(bad("schedule.transmitters", "only valid with kind = \"custom\"")),
            ("custom", Some(t)) => Ok(ScheduleKind::Custom(t.clone())),
            ("custom", None) => Err(bad("schedule.transmitters", "required with kind = \"custom\"")),
            (other, _) => Err(bad("schedule.kind", format!("expected \"round_robin\" or \"custom\", got {other:?}"))),
        }
    }

    pub fn num_slots(&self) -> usize {
        match &self.schedule.transmitters {
            Some(t) if self.schedule.kind == "custom" => t.len(),
            _ => self.scene.rus.len(),
        }
    }

    pub fn ru_centroid(&self) -> Point2 {
        let k = self.scene.rus.len().max(1) as f64;
        let (sx, sy) = self
            .scene
            .rus
            .iter()
            .fold((0.0, 0.0), |(x, y), r| (x + r.position[0], y + r.position[1]));
        Point2::new(sx / k, sy / k)
    }

    /// Checks every invariant and names the offending key on failure.
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(bad("trials", "must be >= 1"));
        }
        let s = &self.scene;
        positive("scene.carrier_freq", s.carrier_freq)?;
        positive("scene.subcarrier_spacing", s.subcarrier_spacing)?;
        positive("scene.noise_power", s.noise_power)?;
        if s.num_subcarriers == 0 {
            return Err(bad("scene.num_subcarriers", "must be >= 1"));
        }
        if s.rus.len() < 2 {
            return Err(bad("scene.rus", format!("need at least 2 RUs, got {}", s.rus.len())));
        }
        for (k, ru) in s.rus.iter().enumerate() {
            let key = |f: &str| format!("scene.rus[{k}].{f}");
            if ru.position.iter().any(|v| !v.is_finite()) {
                return Err(bad(&key("position"), "must be finite"));
            }
            if ru.num_antennas < 2 {
                return Err(bad(&key("num_antennas"), format!("must be >= 2, got {}", ru.num_antennas)));
            }
            if ru.num_beams == 0 || ru.num_beams >= ru.num_antennas {
                return Err(bad(
                    &key("num_beams"),
                    format!("must satisfy 1 <= Z < M (Z = {}, M = {})", ru.num_beams, ru.num_antennas),
                ));
            }
            if ru.aim.is_some() && ru.boresight.is_some() {
                return Err(bad(&key("aim"), "give either aim or boresight, not both"));
            }
            if let Some(b) = ru.boresight {
                let n = (b[0] * b[0] + b[1] * b[1]).sqrt();
                if !n.is_finite() || n == 0.0 {
                    return Err(bad(&key("boresight"), "must be a nonzero direction"));
                }
            }
            if let Some(a) = ru.aim {
                if a == ru.position {
                    return Err(bad(&key("aim"), "coincides with the RU position"));
                }
            }
            if ru.aim.is_none() && ru.boresight.is_none() && self.ru_centroid() == Point2::from(ru.position) {
                return Err(bad(&key("position"), "RU sits at the centroid; give aim or boresight"));
            }
            if s.rus[..k].iter().any(|o| o.position == ru.position) {
                return Err(bad(&key("position"), "duplicate RU position"));
            }
        }

        let g = &self.grid;
        corners("grid.min", g.min, g.max)?;
        if g.nx < 2 || g.ny < 2 {
            return Err(bad("grid.nx", format!("grid needs nx, ny >= 2, got {} x {}", g.nx, g.ny)));
        }
        let q = g.nx * g.ny;

        let t = &self.targets;
        corners("targets.region_min", t.region_min, t.region_max)?;
        positive("targets.rcs", t.rcs)?;
        if t.l_min == 0 || t.l_min > t.l_max {
            return Err(bad("targets.l_min", format!("need 1 <= l_min <= l_max, got {}..={}", t.l_min, t.l_max)));
        }
        if t.l_max > q {
            return Err(bad("targets.l_max", format!("exceeds grid size Q = {q}")));
        }

        let kind = self.schedule_kind()?;
        if let ScheduleKind::Custom(sets) = &kind {
            if sets.is_empty() {
                return Err(bad("schedule.transmitters", "needs at least one slot"));
            }
            for (i, set) in sets.iter().enumerate() {
                if set.is_empty() || set.len() >= s.rus.len() || set.iter().any(|&k| k >= s.rus.len()) {
                    return Err(bad(
                        &format!("schedule.transmitters[{i}]"),
                        "must name between 1 and K-1 valid RU indices",
                    ));
                }
            }
        }

        let patterns = self.patterns();
        if patterns.is_empty() {
            return Err(bad("beamforming.pattern", "needs at least one pattern"));
        }
        if (1..patterns.len()).any(|i| patterns[..i].contains(&patterns[i])) {
            return Err(bad("beamforming.pattern", "lists a pattern twice"));
        }

        let m = &self.solver.methods;
        if m.is_empty() {
            return Err(bad("solver.methods", "needs at least one of \"sbl\", \"omp\""));
        }
        if (1..m.len()).any(|i| m[..i].contains(&m[i])) {
            return Err(bad("solver.methods", "lists a solver twice"));
        }
        if self.solver.max_iters == 0 {
            return Err(bad("solver.max_iters", "must be >= 1"));
        }
        positive("solver.stop_tol", self.solver.stop_tol)?;

        let d = &self.detection;
        if !(d.pfa > 0.0 && d.pfa < 1.0) {
            return Err(bad("detection.pfa", format!("must be in (0, 1), got {}", d.pfa)));
        }
        if d.train == 0 {
            return Err(bad("detection.train", "must be >= 1"));
        }
        if d.method == DetectionMethod::Cfar {
            let span = 2 * (d.guard + d.train) + 1;
            if span > g.nx || span > g.ny {
                return Err(bad(
                    "detection.guard",
                    format!("CFAR window {span} x {span} exceeds grid {} x {}", g.nx, g.ny),
                ));
            }
        }

        match (&self.sweep.snr_db, &self.sweep.tx_power_w) {
            (Some(_), Some(_)) => return Err(bad("sweep.tx_power_w", "give either snr_db or tx_power_w, not both")),
            (Some(v), None) => {
                if v.is_empty() {
                    return Err(bad("sweep.snr_db", "must not be empty"));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad("sweep.snr_db", "values must be finite"));
                }
            }
            (None, Some(v)) => {
                if v.is_empty() {
                    return Err(bad("sweep.tx_power_w", "must not be empty"));
                }
                for &p in v {
                    positive("sweep.tx_power_w", p)?;
                }
            }
            (None, None) => {}
        }

        if self.pep.order == Some(0) {
            return Err(bad("pep.order", "must be >= 1 (omit the key to disable the bound)"));
        }
        Ok(())
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
