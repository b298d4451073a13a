//! Physical channel synthesis, observation stacking and grid-based sensing
//! matrix assembly.
//!
//! Every (slot, receiver) block of an observation is `N * M_k` long and
//! subcarrier-major: entry `n * M_k + m` belongs to subcarrier `n`, antenna `m`.
//! Blocks are stacked slot by slot, receivers in ascending index order inside
//! each slot. The sensing matrix uses the same row layout.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{PathParams, Point2, Scene, Target};
use crate::waveform::{build_codebook, make_weights, steering_vector, tx_signal, BeamCodebook, BfPattern, TxWeights};
use crate::C64;

/// Transmitter and receiver sets of one slot (0-based RU indices, ascending).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRoles {
    pub transmitters: Vec<usize>,
    pub receivers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IlluminationSchedule {
    pub num_rus: usize,
    pub slots: Vec<SlotRoles>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    RoundRobin,
    /// Per-slot transmitter sets; receivers are every other RU.
    Custom(Vec<Vec<usize>>),
}

impl IlluminationSchedule {
    /// Slot s: RU s illuminates, all others listen.
    pub fn round_robin(num_rus: usize, num_slots: usize) -> Result<Self> {
        if num_slots != num_rus {
            return Err(Error::config(format!(
                "round_robin schedule needs S = K (S = {num_slots}, K = {num_rus})"
            )));
        }
        Self::custom(num_rus, (0..num_rus).map(|s| (vec![s], all_but(num_rus, &[s]))).collect())
    }

    /// Validates explicit (transmitters, receivers) pairs per slot.
    pub fn custom(num_rus: usize, slots: Vec<(Vec<usize>, Vec<usize>)>) -> Result<Self> {
        if num_rus < 2 {
            return Err(Error::config(format!(
                "a schedule needs at least two RUs (K = {num_rus})"
            )));
        }
        if slots.is_empty() {
            return Err(Error::config("schedule has no slots"));
        }
        let mut out = Vec::with_capacity(slots.len());
        for (s, (mut tx, mut rx)) in slots.into_iter().enumerate() {
            tx.sort_unstable();
            tx.dedup();
            rx.sort_unstable();
            rx.dedup();
            if tx.is_empty() {
                return Err(Error::config(format!("slot {s}: empty transmitter set")));
            }
            if let Some(bad) = tx.iter().chain(&rx).find(|&&k| k >= num_rus) {
                return Err(Error::config(format!("slot {s}: RU index {bad} out of range")));
            }
            if let Some(both) = tx.iter().find(|k| rx.contains(k)) {
                return Err(Error::config(format!(
                    "slot {s}: RU {both} both transmits and receives (full duplex)"
                )));
            }
            if tx.len() + rx.len() != num_rus {
                return Err(Error::config(format!(
                    "slot {s}: transmitter and receiver sets must cover all {num_rus} RUs"
                )));
            }
            out.push(SlotRoles {
                transmitters: tx,
                receivers: rx,
            });
        }
        Ok(IlluminationSchedule {
            num_rus,
            slots: out,
        })
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    fn check(&self, illuminator: usize, receiver: usize, slot: usize) -> Result<()> {
        let roles = self
            .slots
            .get(slot)
            .ok_or_else(|| Error::domain(format!("slot {slot} not in schedule")))?;
        if !roles.transmitters.contains(&illuminator) || !roles.receivers.contains(&receiver) {
            return Err(Error::domain(format!(
                "schedule violation: slot {slot} does not pair illuminator {illuminator} with receiver {receiver}"
            )));
        }
        Ok(())
    }
}

fn all_but(k: usize, skip: &[usize]) -> Vec<usize> {
    (0..k).filter(|i| !skip.contains(i)).collect()
}

pub fn make_schedule(kind: &ScheduleKind, num_rus: usize, num_slots: usize) -> Result<IlluminationSchedule> {
    match kind {
        ScheduleKind::RoundRobin => IlluminationSchedule::round_robin(num_rus, num_slots),
        ScheduleKind::Custom(tx_sets) => {
            if tx_sets.len() != num_slots {
                return Err(Error::config(format!(
                    "custom schedule lists {} slots, scene has S = {num_slots}",
                    tx_sets.len()
                )));
            }
            let mut slots = Vec::with_capacity(tx_sets.len());
            for tx in tx_sets {
                if tx.iter().any(|&k| k >= num_rus) {
                    return Err(Error::config("custom schedule: RU index out of range"));
                }
                slots.push((tx.clone(), all_but(num_rus, tx)));
            }
            IlluminationSchedule::custom(num_rus, slots)
        }
    }
}

/// Codebooks plus per-slot, per-RU weights and the resulting transmit vectors.
#[derive(Debug, Clone)]
pub struct Beamforming {
    pub codebooks: Vec<BeamCodebook>,
    /// `weights[slot][ru]`
    pub weights: Vec<Vec<TxWeights>>,
    signals: Vec<Vec<Vec<C64>>>,
}

impl Beamforming {
    pub fn new(codebooks: Vec<BeamCodebook>, weights: Vec<Vec<TxWeights>>) -> Result<Self> {
        let mut signals = Vec::with_capacity(weights.len());
        for slot in &weights {
            if slot.len() != codebooks.len() {
                return Err(Error::Dimension {
                    what: "weights per slot vs RU count",
                    expected: codebooks.len(),
                    got: slot.len(),
                });
            }
            signals.push(
                codebooks
                    .iter()
                    .zip(slot)
                    .map(|(cb, w)| tx_signal(cb, w))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(Beamforming {
            codebooks,
            weights,
            signals,
        })
    }

    /// Codebooks from the scene's RU dimensions and fresh weights for every slot.
    pub fn draw<R: Rng + ?Sized>(scene: &Scene, pattern: BfPattern, rng: &mut R) -> Result<Self> {
        let codebooks = scene
            .rus
            .iter()
            .map(|ru| build_codebook(ru.num_antennas, ru.num_beams))
            .collect::<Result<Vec<_>>>()?;
        let mut weights = Vec::with_capacity(scene.num_slots);
        for _ in 0..scene.num_slots {
            weights.push(
                scene
                    .rus
                    .iter()
                    .map(|ru| make_weights(pattern, ru.num_beams, ru.tx_power, scene.num_subcarriers, rng))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(codebooks, weights)
    }

    /// x_k[s], identical on every subcarrier.
    pub fn signal(&self, slot: usize, ru: usize) -> &[C64] {
        &self.signals[slot][ru]
    }
}

/// H_{i,k}[n] for subcarrier `n` (0-based): M_k x M_i.
pub fn channel_matrix(
    illuminator: usize,
    receiver: usize,
    subcarrier: usize,
    scene: &Scene,
    fading: &[C64],
) -> Result<Mat<C64>> {
    if illuminator == receiver {
        return Err(Error::domain("channel_matrix needs distinct illuminator and receiver"));
    }
    if fading.len() != scene.targets.len() {
        return Err(Error::Dimension {
            what: "fading vector vs target count",
            expected: scene.targets.len(),
            got: fading.len(),
        });
    }
    let ru_i = &scene.rus[illuminator];
    let ru_k = &scene.rus[receiver];
    let mut h = Mat::<C64>::zeros(ru_k.num_antennas, ru_i.num_antennas);
    for (target, &rho) in scene.targets.iter().zip(fading) {
        let p = PathParams::new(ru_i, ru_k, target.position, scene.wavelength())?;
        let a = steering_vector(ru_k.num_antennas, p.aoa);
        let b = steering_vector(ru_i.num_antennas, p.aod);
        let phase = C64::from_polar(1.0, -2.0 * PI * p.delay * subcarrier as f64 * scene.subcarrier_spacing);
        let coef = rho * p.pathloss.sqrt() * phase;
        for r in 0..a.len() {
            for c in 0..b.len() {
                h[(r, c)] += coef * a[r] * b[c].conj();
            }
        }
    }
    Ok(h)
}

/// Stacked response (length `N * M_k`) of a unit reflector at `point` seen by
/// `receiver` while `illuminator` transmits in `slot`.
pub fn atom(
    illuminator: usize,
    receiver: usize,
    slot: usize,
    point: Point2,
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
) -> Result<Vec<C64>> {
    schedule.check(illuminator, receiver, slot)?;
    let mut out = vec![C64::new(0.0, 0.0); scene.num_subcarriers * scene.rus[receiver].num_antennas];
    accumulate_atom(&mut out, illuminator, receiver, slot, point, scene, bf, C64::new(1.0, 0.0))?;
    Ok(out)
}

/// out += weight * atom(illuminator, receiver, slot, point)
#[allow(clippy::too_many_arguments)]
fn accumulate_atom(
    out: &mut [C64],
    illuminator: usize,
    receiver: usize,
    slot: usize,
    point: Point2,
    scene: &Scene,
    bf: &Beamforming,
    weight: C64,
) -> Result<()> {
    let ru_i = &scene.rus[illuminator];
    let ru_k = &scene.rus[receiver];
    let p = PathParams::new(ru_i, ru_k, point, scene.wavelength())?;
    let x = bf.signal(slot, illuminator);
    let b_tx = steering_vector(ru_i.num_antennas, p.aod);
    let gain: C64 = b_tx.iter().zip(x).map(|(b, x)| b.conj() * x).sum();
    let a = steering_vector(ru_k.num_antennas, p.aoa);
    let m_k = ru_k.num_antennas;
    let base = weight * gain * p.pathloss.sqrt();
    for n in 0..scene.num_subcarriers {
        // evaluated per subcarrier rather than by repeated multiplication so
        // the phase error does not grow with n
        let phase = C64::from_polar(1.0, -2.0 * PI * p.delay * n as f64 * scene.subcarrier_spacing);
        let c = base * phase;
        let blk = &mut out[n * m_k..(n + 1) * m_k];
        for (o, am) in blk.iter_mut().zip(&a) {
            *o += c * am;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBlock {
    pub slot: usize,
    pub receiver: usize,
    pub offset: usize,
    pub height: usize,
}

/// Row layout of a stacked observation for a given schedule.
pub fn row_blocks(scene: &Scene, schedule: &IlluminationSchedule) -> Vec<RowBlock> {
    let mut blocks = Vec::new();
    let mut offset = 0;
    for (s, roles) in schedule.slots.iter().enumerate() {
        for &k in &roles.receivers {
            let height = scene.num_subcarriers * scene.rus[k].num_antennas;
            blocks.push(RowBlock {
                slot: s,
                receiver: k,
                offset,
                height,
            });
            offset += height;
        }
    }
    blocks
}

#[derive(Debug, Clone)]
pub struct SensingMatrix {
    pub a: Mat<C64>,
    pub row_blocks: Vec<RowBlock>,
}

impl SensingMatrix {
    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn block(&self, b: &RowBlock) -> MatRef<'_, C64> {
        self.a.as_ref().subrows(b.offset, b.height)
    }

    /// Stacks the given row blocks back into one matrix, in the given order.
    pub fn restack(blocks: &[MatRef<'_, C64>]) -> Mat<C64> {
        let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
        let cols = blocks.first().map_or(0, |b| b.ncols());
        let mut out = Mat::<C64>::zeros(rows, cols);
        let mut off = 0;
        for b in blocks {
            out.as_mut().subrows_mut(off, b.nrows()).copy_from(b);
            off += b.nrows();
        }
        out
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.ncols())
            .map(|q| self.a.col(q).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    /// A x for a dense grid-domain vector.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.nrows()];
        for (q, &xq) in x.iter().enumerate() {
            if xq == C64::new(0.0, 0.0) {
                continue;
            }
            for (yr, a) in y.iter_mut().zip(self.a.col(q).iter()) {
                *yr += a * xq;
            }
        }
        y
    }
}

/// Column q is the network-wide response of a unit reflector at grid point q,
/// summed over each slot's illuminators.
pub fn assemble_sensing_matrix(
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
) -> Result<SensingMatrix> {
    let blocks = row_blocks(scene, schedule);
    let rows = blocks.last().map_or(0, |b| b.offset + b.height);
    let q_len = scene.grid.len();
    let mut a = Mat::<C64>::zeros(rows, q_len);
    let mut col = vec![C64::new(0.0, 0.0); rows];
    for q in 0..q_len {
        col.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        stack_point(&mut col, &blocks, scene.grid.point(q), scene, schedule, bf, C64::new(1.0, 0.0))?;
        for (r, v) in col.iter().enumerate() {
            a[(r, q)] = *v;
        }
    }
    Ok(SensingMatrix { a, row_blocks: blocks })
}

fn stack_point(
    out: &mut [C64],
    blocks: &[RowBlock],
    point: Point2,
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
    weight: C64,
) -> Result<()> {
    for b in blocks {
        let seg = &mut out[b.offset..b.offset + b.height];
        for &i in &schedule.slots[b.slot].transmitters {
            accumulate_atom(seg, i, b.receiver, b.slot, point, scene, bf, weight)?;
        }
    }
    Ok(())
}

/// Grid-domain sparse fading vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingVector {
    pub values: Vec<C64>,
    pub support: Vec<usize>,
}

impl FadingVector {
    /// Scatters per-target fading onto grid indices.
    pub fn on_grid(grid_len: usize, indices: &[usize], fading: &[C64]) -> Result<Self> {
        if indices.len() != fading.len() {
            return Err(Error::Dimension {
                what: "grid indices vs fading draws",
                expected: fading.len(),
                got: indices.len(),
            });
        }
        let mut values = vec![C64::new(0.0, 0.0); grid_len];
        for (&q, &rho) in indices.iter().zip(fading) {
            if q >= grid_len {
                return Err(Error::domain(format!("grid index {q} out of range")));
            }
            values[q] += rho;
        }
        let support = (0..grid_len).filter(|&q| values[q] != C64::new(0.0, 0.0)).collect();
        Ok(FadingVector { values, support })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OnGrid,
    OffGrid,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub y: Vec<C64>,
    pub noise_power: f64,
    pub provenance: Provenance,
    pub targets: Vec<Target>,
    /// Per-target fading rho_l used for this observation.
    pub fading: Vec<C64>,
}

/// rho_l ~ CN(0, rcs_l)
pub fn draw_fading<R: Rng + ?Sized>(targets: &[Target], rng: &mut R) -> Vec<C64> {
    targets.iter().map(|t| complex_normal(rng, t.rcs)).collect()
}

pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Noiseless stacked observation from the exact target coordinates.
pub fn noiseless_observation(
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
    fading: &[C64],
) -> Result<Vec<C64>> {
    if fading.len() != scene.targets.len() {
        return Err(Error::Dimension {
            what: "fading vector vs target count",
            expected: scene.targets.len(),
            got: fading.len(),
        });
    }
    let blocks = row_blocks(scene, schedule);
    let rows = blocks.last().map_or(0, |b| b.offset + b.height);
    let mut y = vec![C64::new(0.0, 0.0); rows];
    for (t, &rho) in scene.targets.iter().zip(fading) {
        stack_point(&mut y, &blocks, t.position, scene, schedule, bf, rho)?;
    }
    Ok(y)
}

/// y = sum_l rho_l psi_l + n with fresh fading draws and, unless `noiseless`,
/// n ~ CN(0, N0 I).
pub fn synthesize_observation<R: Rng + ?Sized>(
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
    rng: &mut R,
    noiseless: bool,
) -> Result<Observation> {
    let fading = draw_fading(&scene.targets, rng);
    observe_with_fading(scene, schedule, bf, fading, if noiseless { None } else { Some(rng) })
}

/// Same as [`synthesize_observation`] with caller-provided fading; noise is
/// drawn from `noise_rng` when given.
pub fn observe_with_fading<R: Rng + ?Sized>(
    scene: &Scene,
    schedule: &IlluminationSchedule,
    bf: &Beamforming,
    fading: Vec<C64>,
    noise_rng: Option<&mut R>,
) -> Result<Observation> {
    let mut y = noiseless_observation(scene, schedule, bf, &fading)?;
    if let Some(rng) = noise_rng {
        for v in y.iter_mut() {
            *v += complex_normal(rng, scene.noise_power);
        }
    }
    let on_grid = scene
        .targets
        .iter()
        .all(|t| scene.grid.points().contains(&t.position));
    Ok(Observation {
        y,
        noise_power: scene.noise_power,
        provenance: if on_grid { Provenance::OnGrid } else { Provenance::OffGrid },
        targets: scene.targets.clone(),
        fading,
    })
}

/// Writes a complex matrix as a 16-byte header (rows, cols as LE u64) followed
/// by row-major interleaved (re, im) LE f64.
pub fn write_dump(path: &Path, m: MatRef<'_, C64>) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 16 * m.nrows() * m.ncols());
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<Mat<C64>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let word = |i: usize| -> [u8; 8] { buf[i..i + 8].try_into().expect("8-byte slice") };
    if buf.len() < 16 {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "dump header truncated"),
        ));
    }
    let rows = u64::from_le_bytes(word(0)) as usize;
    let cols = u64::from_le_bytes(word(8)) as usize;
    if buf.len() != 16 + 16 * rows * cols {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, "dump length does not match header"),
        ));
    }
    Ok(Mat::from_fn(rows, cols, |r, c| {
        let o = 16 + 16 * (r * cols + c);
        C64::new(f64::from_le_bytes(word(o)), f64::from_le_bytes(word(o + 8)))
    }))
}

/// Column vector view of a slice, for dumps.
pub fn column(v: &[C64]) -> Mat<C64> {
    Mat::from_fn(v.len(), 1, |r, _| v[r])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{GridSpec, RuConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_scene(m: usize, n: usize, nx: usize) -> Scene {
        let corners = [Point2::new(0.0, 0.0), Point2::new(100.0, 0.0), Point2::new(50.0, 86.0)];
        let centroid = Point2::new(50.0, 86.0 / 3.0);
        let rus = corners
            .iter()
            .map(|&p| RuConfig::aimed_at(p, centroid, m, m / 2, 1e9).unwrap())
            .collect();
        let grid = GridSpec::new(Point2::new(25.0, 20.0), Point2::new(75.0, 70.0), nx, nx).unwrap();
        Scene::new(rus, vec![], grid, 10e9, n, 10e6, 1.0, 3).unwrap()
    }

    #[test]
    fn schedule_round_robin() {
        let s = IlluminationSchedule::round_robin(3, 3).unwrap();
        assert_eq!(s.slots[0], SlotRoles { transmitters: vec![0], receivers: vec![1, 2] });
        assert_eq!(s.slots[1], SlotRoles { transmitters: vec![1], receivers: vec![0, 2] });
        assert_eq!(s.slots[2], SlotRoles { transmitters: vec![2], receivers: vec![0, 1] });
        assert!(IlluminationSchedule::round_robin(3, 2).is_err());
        assert!(IlluminationSchedule::round_robin(1, 1).is_err());
    }

    #[test]
    fn schedule_custom_validation() {
        assert!(IlluminationSchedule::custom(3, vec![(vec![0], vec![0, 1, 2])]).is_err());
        assert!(IlluminationSchedule::custom(3, vec![(vec![], vec![0, 1, 2])]).is_err());
        assert!(IlluminationSchedule::custom(3, vec![(vec![0], vec![1])]).is_err());
        let s = IlluminationSchedule::custom(3, vec![(vec![0, 2], vec![1])]).unwrap();
        assert_eq!(s.slots[0].transmitters, vec![0, 2]);
        let s = make_schedule(&ScheduleKind::Custom(vec![vec![1], vec![0, 2]]), 3, 2).unwrap();
        assert_eq!(s.slots[1].receivers, vec![1]);
    }

    #[test]
    fn channel_matrix_trivial_cases() {
        let scene = small_scene(4, 4, 5);
        let h = channel_matrix(0, 1, 0, &scene, &[]).unwrap();
        assert!(h.col_iter().all(|c| c.iter().all(|v| *v == C64::new(0.0, 0.0))));
        assert!(channel_matrix(1, 1, 0, &scene, &[]).is_err());

        let p = Point2::new(40.0, 30.0);
        let scene = scene.with_targets(vec![Target::new(p, 1.0).unwrap()]).unwrap();
        let h = channel_matrix(0, 1, 0, &scene, &[C64::new(1.0, 0.0)]).unwrap();
        let pp = PathParams::new(&scene.rus[0], &scene.rus[1], p, scene.wavelength()).unwrap();
        let a = steering_vector(4, pp.aoa);
        let b = steering_vector(4, pp.aod);
        for r in 0..4 {
            for c in 0..4 {
                let want = pp.pathloss.sqrt() * a[r] * b[c].conj();
                assert!((h[(r, c)] - want).norm() < 1e-12 * want.norm());
            }
        }
    }

    #[test]
    fn atom_norm_and_single_subcarrier() {
        let scene = small_scene(8, 4, 5);
        let sched = IlluminationSchedule::round_robin(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bf = Beamforming::draw(&scene, BfPattern::Random, &mut rng).unwrap();
        let p = Point2::new(60.0, 41.0);
        let v = atom(0, 2, 0, p, &scene, &sched, &bf).unwrap();
        let pp = PathParams::new(&scene.rus[0], &scene.rus[2], p, scene.wavelength()).unwrap();
        let b: C64 = steering_vector(8, pp.aod)
            .iter()
            .zip(bf.signal(0, 0))
            .map(|(s, x)| s.conj() * x)
            .sum();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let want = (pp.pathloss * 4.0 * 8.0).sqrt() * b.norm();
        assert!((norm - want).abs() < 1e-12 * want);

        let one = Scene {
            num_subcarriers: 1,
            ..scene.clone()
        };
        let v = atom(0, 2, 0, p, &one, &sched, &bf).unwrap();
        let a = steering_vector(8, pp.aoa);
        for m in 0..8 {
            let want = pp.pathloss.sqrt() * b * a[m];
            assert!((v[m] - want).norm() < 1e-12 * want.norm());
        }

        assert!(atom(1, 2, 0, p, &scene, &sched, &bf).is_err());
        assert!(atom(0, 0, 0, p, &scene, &sched, &bf).is_err());
    }

    #[test]
    fn atom_matches_channel_oracle() {
        let scene = small_scene(8, 6, 5);
        let sched = IlluminationSchedule::round_robin(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bf = Beamforming::draw(&scene, BfPattern::Random, &mut rng).unwrap();
        let p = scene.grid.point(7);
        let with_target = scene.with_targets(vec![Target::new(p, 1.0).unwrap()]).unwrap();
        for (s, i, k) in [(0usize, 0usize, 1usize), (1, 1, 2), (2, 2, 0)] {
            let v = atom(i, k, s, p, &scene, &sched, &bf).unwrap();
            let x = bf.signal(s, i);
            for n in 0..6 {
                let h = channel_matrix(i, k, n, &with_target, &[C64::new(1.0, 0.0)]).unwrap();
                for m in 0..8 {
                    let hx: C64 = (0..8).map(|c| h[(m, c)] * x[c]).sum();
                    let got = v[n * 8 + m];
                    assert!((got - hx).norm() <= 1e-10 * hx.norm().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn full_scale_dimensions() {
        let scene = small_scene(16, 16, 20);
        let sched = IlluminationSchedule::round_robin(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bf = Beamforming::draw(&scene, BfPattern::Equal, &mut rng).unwrap();
        let a = assemble_sensing_matrix(&scene, &sched, &bf).unwrap();
        assert_eq!((a.nrows(), a.ncols()), (1536, 400));
        assert_eq!(a.row_blocks.len(), 6);
        assert_eq!(a.row_blocks[1], RowBlock { slot: 0, receiver: 2, offset: 256, height: 256 });
        assert!(a.column_norms().iter().all(|n| *n > 0.0));
    }

    #[test]
    fn single_column_matrix_is_one_atom() {
        let mut scene = small_scene(4, 3, 1);
        scene.grid = GridSpec::new(Point2::new(30.0, 30.0), Point2::new(31.0, 31.0), 1, 1).unwrap();
        scene.num_slots = 1;
        let sched = IlluminationSchedule::custom(3, vec![(vec![0], vec![1, 2])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bf = Beamforming::draw(&scene, BfPattern::Equal, &mut rng).unwrap();
        let a = assemble_sensing_matrix(&scene, &sched, &bf).unwrap();
        assert_eq!(a.ncols(), 1);
        let atom1 = atom(0, 1, 0, scene.grid.point(0), &scene, &sched, &bf).unwrap();
        for (r, v) in atom1.iter().enumerate() {
            assert_eq!(a.a[(r, 0)], *v);
        }
    }

    #[test]
    fn noise_statistics() {
        let mut scene = small_scene(8, 8, 3);
        scene.noise_power = 2.5;
        let sched = IlluminationSchedule::round_robin(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bf = Beamforming::draw(&scene, BfPattern::Equal, &mut rng).unwrap();
        let mut sum = 0.0;
        let mut count = 0usize;
        while count < 20_000 {
            let obs = synthesize_observation(&scene, &sched, &bf, &mut rng, false).unwrap();
            sum += obs.y.iter().map(|v| v.norm_sqr()).sum::<f64>();
            count += obs.y.len();
        }
        let var = sum / count as f64;
        assert!((var / 2.5 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn dump_round_trip() {
        let m = Mat::from_fn(3, 2, |r, c| C64::new(r as f64 + 0.5, -(c as f64) * 1.25));
        let dir = std::env::temp_dir().join(format!("cfsense-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.bin");
        write_dump(&path, m.as_ref()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 16 + 6 * 16);
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        // second element in row-major order is (0, 1)
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.5);
        assert_eq!(f64::from_le_bytes(bytes[40..48].try_into().unwrap()), -1.25);
        let back = read_dump(&path).unwrap();
        assert_eq!(back, m);
        std::fs::remove_dir_all(&dir).ok();
    }
}
