//! Seeded Monte Carlo trials and SNR sweeps.

use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Solver, SweepPoint, TargetMode};
use crate::detection::{detect, mse_locations, score_on_grid, DetectionResult, Detector, MetricReport};
use crate::error::{Error, Result};
use crate::estimators::{omp, sbl_em, SblOptions};
use crate::forward::{
    assemble_sensing_matrix, draw_fading, make_schedule, observe_with_fading, Beamforming, IlluminationSchedule,
    Observation, SensingMatrix,
};
use crate::pep::{union_bound, SupportHypothesis};
use crate::scene::{GridSpec, Point2, RuConfig, Scene, Target};
use crate::waveform::BfPattern;
use crate::C64;

const STREAM_SCENARIO: u64 = 1;
const STREAM_BEAMS: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Independent ChaCha stream for one (purpose, trial, sub-index) triple.
fn stream(seed: u64, purpose: u64, trial: usize, sub: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 56) | ((sub as u64) << 32) | trial as u64);
    rng
}

fn pattern_stream_index(p: BfPattern) -> usize {
    match p {
        BfPattern::Equal => 0,
        BfPattern::Random => 1,
    }
}

/// A validated configuration turned into reusable objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Scene with unit transmit power; sweep points substitute their own.
    pub base: Scene,
    pub schedule: IlluminationSchedule,
    pub points: Vec<SweepPoint>,
    pub patterns: Vec<BfPattern>,
    pub detector: Detector,
    /// Grid indices inside the target region (on-grid draws).
    pub candidates: Vec<usize>,
    pub config_hash: String,
}

fn ru_list(cfg: &ExperimentConfig, tx_power: f64) -> Result<Vec<RuConfig>> {
    let centroid = cfg.ru_centroid();
    cfg.scene
        .rus
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let pos = Point2::from(r.position);
            let ru = match (r.aim, r.boresight) {
                (_, Some(b)) => {
                    let b = Point2::from(b);
                    RuConfig::new(pos, b * (1.0 / b.norm()), r.num_antennas, r.num_beams, tx_power)
                }
                (Some(a), None) => RuConfig::aimed_at(pos, Point2::from(a), r.num_antennas, r.num_beams, tx_power),
                (None, None) => RuConfig::aimed_at(pos, centroid, r.num_antennas, r.num_beams, tx_power),
            };
            ru.map_err(|e| Error::config(format!("scene.rus[{k}]: {e}")))
        })
        .collect()
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let g = &config.grid;
        let grid = GridSpec::new(Point2::from(g.min), Point2::from(g.max), g.nx, g.ny)
            .map_err(|e| Error::config(format!("grid: {e}")))?;
        let s = &config.scene;
        let base = Scene::new(
            ru_list(&config, 1.0)?,
            Vec::new(),
            grid,
            s.carrier_freq,
            s.num_subcarriers,
            s.subcarrier_spacing,
            s.noise_power,
            config.num_slots(),
        )
        .map_err(|e| Error::config(format!("scene: {e}")))?;
        let schedule = make_schedule(&config.schedule_kind()?, base.num_rus(), base.num_slots)
            .map_err(|e| Error::config(format!("schedule: {e}")))?;

        let t = &config.targets;
        let (lo, hi) = (Point2::from(t.region_min), Point2::from(t.region_max));
        let candidates: Vec<usize> = (0..base.grid.len())
            .filter(|&q| {
                let p = base.grid.point(q);
                p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y
            })
            .collect();
        if t.mode == TargetMode::OnGrid && candidates.len() < t.l_max {
            return Err(Error::config(format!(
                "targets.region_min: region holds {} grid points, fewer than l_max = {}",
                candidates.len(),
                t.l_max
            )));
        }

        let config_hash = {
            let digest = Sha256::digest(config.to_toml_string().as_bytes());
            digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
        };
        Ok(Experiment {
            points: config.points(),
            patterns: config.patterns(),
            detector: config.detection.detector(),
            base,
            schedule,
            candidates,
            config_hash,
            config,
        })
    }

    pub fn solvers(&self) -> &[Solver] {
        &self.config.solver.methods
    }

    pub fn scene_at(&self, point: &SweepPoint) -> Result<Scene> {
        let rus = self
            .base
            .rus
            .iter()
            .map(|r| r.with_tx_power(point.tx_power))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            rus,
            noise_power: point.noise_power,
            ..self.base.clone()
        })
    }
}

/// Target placement and fading of one trial, shared by all sweep points and
/// patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub trial: usize,
    pub targets: Vec<Target>,
    /// Grid indices of the targets in on-grid mode.
    pub truth_indices: Option<Vec<usize>>,
    pub fading: Vec<C64>,
}

pub fn draw_scenario(exp: &Experiment, trial: usize) -> Result<Scenario> {
    let cfg = &exp.config.targets;
    let grid = &exp.base.grid;
    let mut rng = stream(exp.config.seed, STREAM_SCENARIO, trial, 0);
    let l = rng.gen_range(cfg.l_min..=cfg.l_max);
    let (positions, truth_indices) = match cfg.mode {
        TargetMode::OnGrid => {
            let picks: Vec<usize> = sample(&mut rng, exp.candidates.len(), l)
                .into_iter()
                .map(|i| exp.candidates[i])
                .collect();
            (picks.iter().map(|&q| grid.point(q)).collect::<Vec<_>>(), Some(picks))
        }
        TargetMode::OffGrid => {
            let mut pts: Vec<Point2> = Vec::with_capacity(l);
            while pts.len() < l {
                let p = Point2::new(
                    rng.gen_range(cfg.region_min[0]..=cfg.region_max[0]),
                    rng.gen_range(cfg.region_min[1]..=cfg.region_max[1]),
                );
                if grid.point(grid.nearest_index(p)) != p && !pts.contains(&p) {
                    pts.push(p);
                }
            }
            (pts, None)
        }
    };
    let targets = positions
        .into_iter()
        .map(|p| Target::new(p, cfg.rcs))
        .collect::<Result<Vec<_>>>()?;
    let fading = draw_fading(&targets, &mut rng);
    Ok(Scenario {
        trial,
        targets,
        truth_indices,
        fading,
    })
}

/// Everything a solver sees in one (trial, sweep point, pattern) cell.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub scenario: Scenario,
    pub point: SweepPoint,
    pub pattern: BfPattern,
    pub scene: Scene,
    pub beamforming: Beamforming,
    pub sensing: SensingMatrix,
    pub observation: Observation,
    /// N0 handed to SBL.
    pub solver_noise_power: f64,
}

pub fn setup_trial(exp: &Experiment, trial: usize, snr_index: usize, pattern: BfPattern) -> Result<TrialSetup> {
    let point = *exp
        .points
        .get(snr_index)
        .ok_or_else(|| Error::config(format!("sweep point {snr_index} does not exist")))?;
    let scenario = draw_scenario(exp, trial)?;
    let scene = exp.scene_at(&point)?.with_targets(scenario.targets.clone())?;
    let mut beam_rng = stream(exp.config.seed, STREAM_BEAMS, trial, pattern_stream_index(pattern));
    let beamforming = Beamforming::draw(&scene, pattern, &mut beam_rng)?;
    let sensing = assemble_sensing_matrix(&scene, &exp.schedule, &beamforming)?;
    let noise_free = exp.config.sweep.noise_free;
    let mut noise_rng = stream(exp.config.seed, STREAM_NOISE, trial, snr_index);
    let observation = observe_with_fading(
        &scene,
        &exp.schedule,
        &beamforming,
        scenario.fading.clone(),
        if noise_free { None } else { Some(&mut noise_rng) },
    )?;
    let solver_noise_power = if noise_free {
        let a = &sensing.a;
        let energy: f64 = (0..a.ncols()).map(|c| a.col(c).iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
        1e-12 * exp.config.targets.rcs * energy / (a.nrows() * a.ncols()) as f64
    } else {
        point.noise_power
    };
    Ok(TrialSetup {
        scenario,
        point,
        pattern,
        scene,
        beamforming,
        sensing,
        observation,
        solver_noise_power,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub solver: Solver,
    pub detection: Option<DetectionResult>,
    /// On-grid scoring; absent for off-grid scenes and failed solves.
    pub metrics: Option<MetricReport>,
    /// Present when the detection count equals the true target count.
    pub mse_m: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub snr_index: usize,
    pub snr_db: f64,
    pub bf_pattern: BfPattern,
    pub num_targets: usize,
    pub true_positions: Vec<Point2>,
    pub truth_indices: Option<Vec<usize>>,
    /// Mean |rho_l|^2 of the fading draw.
    pub fading_power: f64,
    pub solvers: Vec<SolverOutcome>,
    pub union_bound: Option<f64>,
    pub pep_error: Option<String>,
    pub wall_time_s: f64,
    pub seed: u64,
    pub config_hash: String,
}

fn grid_field(solver: Solver, setup: &TrialSetup, exp: &Experiment) -> Result<(Vec<f64>, Option<usize>)> {
    let a = setup.sensing.a.as_ref();
    let y = &setup.observation.y;
    match solver {
        Solver::Sbl => {
            let opts = SblOptions {
                track_evidence: false,
                ..SblOptions::new(exp.config.solver.max_iters, exp.config.solver.stop_tol, setup.solver_noise_power)?
            };
            let state = sbl_em(a, y, &opts)?;
            Ok((state.gamma, Some(state.iterations)))
        }
        Solver::Omp => {
            let l = setup.scenario.targets.len();
            let res = omp(a, y, l)?;
            Ok((res.dense(a.ncols()).iter().map(|c| c.norm_sqr()).collect(), Some(res.support.len())))
        }
    }
}

fn run_solver(solver: Solver, setup: &TrialSetup, exp: &Experiment) -> SolverOutcome {
    let grid = &setup.scene.grid;
    let l = setup.scenario.targets.len();
    let attempt = grid_field(solver, setup, exp).and_then(|(field, iters)| {
        let det = detect(&field, grid, &exp.detector, l)?;
        let truth: Vec<Point2> = setup.scenario.targets.iter().map(|t| t.position).collect();
        let mse = if det.locations.len() == l {
            Some(mse_locations(&truth, &det.locations)?)
        } else {
            None
        };
        let metrics = setup.scenario.truth_indices.as_ref().map(|idx| MetricReport {
            mse,
            ..score_on_grid(idx, &det.indices, l)
        });
        Ok((det, metrics, mse, iters))
    });
    match attempt {
        Ok((det, metrics, mse_m, iterations)) => SolverOutcome {
            solver,
            detection: Some(det),
            metrics,
            mse_m,
            iterations,
            error: None,
        },
        Err(e) => SolverOutcome {
            solver,
            detection: None,
            metrics: None,
            mse_m: None,
            iterations: None,
            error: Some(e.to_string()),
        },
    }
}

/// Union bound at the trial's true support; only defined on-grid with noise.
pub fn trial_union_bound(exp: &Experiment, setup: &TrialSetup) -> Option<Result<f64>> {
    let order = exp.config.pep.order?;
    let truth = setup.scenario.truth_indices.as_ref()?;
    if exp.config.sweep.noise_free {
        return None;
    }
    Some((|| {
        let q = SupportHypothesis::from_indices(setup.sensing.ncols(), truth)?;
        let mut c = vec![0.0; setup.sensing.ncols()];
        for (&i, t) in truth.iter().zip(&setup.scenario.targets) {
            c[i] = t.rcs;
        }
        union_bound(&q, setup.sensing.a.as_ref(), &c, setup.point.noise_power, order)
    })())
}

/// One trial at one sweep point under one beamforming pattern, scored for
/// every configured solver. Solver failures are kept in the record.
pub fn run_trial(exp: &Experiment, trial: usize, snr_index: usize, pattern: BfPattern) -> Result<TrialRecord> {
    let start = Instant::now();
    let setup = setup_trial(exp, trial, snr_index, pattern)?;
    let solvers = exp.solvers().iter().map(|&s| run_solver(s, &setup, exp)).collect();
    let (union_bound, pep_error) = match trial_union_bound(exp, &setup) {
        None => (None, None),
        Some(Ok(v)) => (Some(v), None),
        Some(Err(e)) => (None, Some(e.to_string())),
    };
    let fading = &setup.scenario.fading;
    Ok(TrialRecord {
        trial,
        snr_index,
        snr_db: setup.point.snr_db,
        bf_pattern: pattern,
        num_targets: setup.scenario.targets.len(),
        true_positions: setup.scenario.targets.iter().map(|t| t.position).collect(),
        truth_indices: setup.scenario.truth_indices.clone(),
        fading_power: fading.iter().map(|r| r.norm_sqr()).sum::<f64>() / fading.len() as f64,
        solvers,
        union_bound,
        pep_error,
        wall_time_s: start.elapsed().as_secs_f64(),
        seed: exp.config.seed,
        config_hash: exp.config_hash.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub snr_db: f64,
    pub solver: Solver,
    pub bf_pattern: BfPattern,
    pub mdr: Option<f64>,
    pub far: Option<f64>,
    pub mse_m: Option<f64>,
    pub union_bound: Option<f64>,
    /// Trials whose solve succeeded.
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Ordered by sweep point, then trial, then pattern.
    pub records: Vec<TrialRecord>,
    pub rows: Vec<AggregateRow>,
    pub wall_time_s: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// One row per (sweep point, solver, pattern), averaging in record order.
pub fn aggregate(points: &[SweepPoint], solvers: &[Solver], patterns: &[BfPattern], records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for (si, point) in points.iter().enumerate() {
        for &solver in solvers {
            for &pattern in patterns {
                let cell: Vec<(&TrialRecord, &SolverOutcome)> = records
                    .iter()
                    .filter(|r| r.snr_index == si && r.bf_pattern == pattern)
                    .filter_map(|r| r.solvers.iter().find(|o| o.solver == solver).map(|o| (r, o)))
                    .filter(|(_, o)| o.error.is_none())
                    .collect();
                rows.push(AggregateRow {
                    snr_db: point.snr_db,
                    solver,
                    bf_pattern: pattern,
                    mdr: mean(cell.iter().filter_map(|(_, o)| o.metrics.map(|m| m.mdr))),
                    far: mean(cell.iter().filter_map(|(_, o)| o.metrics.map(|m| m.far))),
                    mse_m: mean(cell.iter().filter_map(|(_, o)| o.mse_m)),
                    union_bound: mean(cell.iter().filter_map(|(r, _)| r.union_bound)),
                    trials: cell.len(),
                });
            }
        }
    }
    rows
}

/// Runs every (sweep point, trial, pattern) cell in parallel. Each cell owns
/// RNG streams keyed by (seed, trial, point), so results do not depend on
/// the worker count.
pub fn run_sweep(exp: &Experiment) -> Result<SweepResult> {
    let start = Instant::now();
    let jobs: Vec<(usize, usize)> = (0..exp.points.len())
        .flat_map(|s| (0..exp.config.trials).map(move |t| (s, t)))
        .collect();
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(s, t)| {
            exp.patterns
                .iter()
                .map(|&p| run_trial(exp, t, s, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let rows = aggregate(&exp.points, exp.solvers(), &exp.patterns, &records);
    Ok(SweepResult {
        points: exp.points.clone(),
        records,
        rows,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs `f` on a dedicated pool of `threads` workers (default pool when
/// `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("--threads must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean union bound over the trial draws for one (sweep point, pattern).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepRow {
    pub snr_db: f64,
    pub bf_pattern: BfPattern,
    pub order: usize,
    pub union_bound: f64,
    pub num_sequences: usize,
    pub trials: usize,
}

/// One error sequence of the first trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepSequenceRow {
    pub snr_db: f64,
    pub bf_pattern: BfPattern,
    pub sequence_id: usize,
    pub order: usize,
    pub rank: usize,
    pub upep: f64,
    pub union_bound: f64,
}

/// Bound-only analysis: no solver runs, just the union bound at every
/// trial's true support. Needs on-grid targets.
pub fn run_pep_analysis(exp: &Experiment, order: usize) -> Result<(Vec<PepRow>, Vec<PepSequenceRow>)> {
    if exp.config.targets.mode != TargetMode::OnGrid {
        return Err(Error::config("targets.mode: the pep analysis needs on_grid targets"));
    }
    if order == 0 {
        return Err(Error::config("pep.order must be >= 1"));
    }
    let jobs: Vec<(usize, BfPattern, usize)> = (0..exp.points.len())
        .flat_map(|s| exp.patterns.iter().flat_map(move |&p| (0..exp.config.trials).map(move |t| (s, p, t))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(s, p, t)| {
            let setup = setup_trial(exp, t, s, p)?;
            let truth = setup.scenario.truth_indices.as_ref().expect("on-grid scenario has indices");
            let q = SupportHypothesis::from_indices(setup.sensing.ncols(), truth)?;
            let mut c = vec![0.0; setup.sensing.ncols()];
            for (&i, tg) in truth.iter().zip(&setup.scenario.targets) {
                c[i] = tg.rcs;
            }
            crate::pep::pep_report(&q, setup.sensing.a.as_ref(), &c, setup.point.noise_power, order)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut sequences = Vec::new();
    for (chunk, cell) in reports.chunks(exp.config.trials).zip(jobs.chunks(exp.config.trials)) {
        let (s, p, _) = cell[0];
        let snr_db = exp.points[s].snr_db;
        rows.push(PepRow {
            snr_db,
            bf_pattern: p,
            order,
            union_bound: chunk.iter().map(|r| r.union_bound).sum::<f64>() / chunk.len() as f64,
            num_sequences: chunk.iter().map(|r| r.records.len()).sum::<usize>() / chunk.len(),
            trials: chunk.len(),
        });
        let first = &chunk[0];
        sequences.extend(first.records.iter().enumerate().map(|(i, r)| PepSequenceRow {
            snr_db,
            bf_pattern: p,
            sequence_id: i,
            order: r.error.order(),
            rank: r.eigenvalues.len(),
            upep: r.upep,
            union_bound: first.union_bound,
        }));
    }
    Ok((rows, sequences))
}
