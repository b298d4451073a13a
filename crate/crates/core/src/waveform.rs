//! Array responses, beam codebooks and per-slot transmit weights.

use std::f64::consts::PI;

use faer::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Half-wavelength ULA response: element m is exp(j pi m sin(angle)), m = 0..M.
pub fn steering_vector(num_antennas: usize, angle: f64) -> Vec<C64> {
    let phase = PI * angle.sin();
    (0..num_antennas)
        .map(|m| C64::from_polar(1.0, phase * m as f64))
        .collect()
}

/// Unit-norm beams on a DFT grid in sine space.
#[derive(Debug, Clone)]
pub struct BeamCodebook {
    /// M x Z, one beam per column.
    pub beams: Mat<C64>,
    pub beam_angles: Vec<f64>,
}

impl BeamCodebook {
    pub fn num_antennas(&self) -> usize {
        self.beams.nrows()
    }

    pub fn num_beams(&self) -> usize {
        self.beams.ncols()
    }

    /// Largest off-diagonal magnitude of F^H F.
    pub fn max_cross_correlation(&self) -> f64 {
        let gram = self.beams.adjoint() * &self.beams;
        let z = self.num_beams();
        let mut worst = 0.0f64;
        for i in 0..z {
            for j in 0..z {
                if i != j {
                    worst = worst.max(gram[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// |f_z^H b(angle)| for every beam z.
    pub fn beam_responses(&self, angle: f64) -> Vec<f64> {
        let b = steering_vector(self.num_antennas(), angle);
        (0..self.num_beams())
            .map(|z| {
                let col = self.beams.col(z);
                (0..b.len())
                    .map(|m| col[m].conj() * b[m])
                    .sum::<C64>()
                    .norm()
            })
            .collect()
    }
}

/// Builds `z` beams for an `m`-element ULA.
///
/// Beam sines sit on the grid 2(z-1)/Z folded into [-1, 1) and the columns are
/// ordered by ascending angle. Spacing 2/Z in sine space covers the full
/// aliasing period, so every direction has one nearby beam; Z = 1 gives the
/// broadside beam.
pub fn build_codebook(m: usize, z: usize) -> Result<BeamCodebook> {
    if z == 0 || z >= m {
        return Err(Error::config(format!(
            "codebook needs 1 <= Z < M (Z = {z}, M = {m})"
        )));
    }
    let mut sines: Vec<f64> = (0..z)
        .map(|i| {
            let s = 2.0 * i as f64 / z as f64;
            if s >= 1.0 {
                s - 2.0
            } else {
                s
            }
        })
        .collect();
    sines.sort_by(|a, b| a.total_cmp(b));
    let beam_angles: Vec<f64> = sines.iter().map(|s| s.asin()).collect();
    let scale = 1.0 / (m as f64).sqrt();
    let mut beams = Mat::<C64>::zeros(m, z);
    for (j, &s) in sines.iter().enumerate() {
        // Built from the sine directly so that sin(asin(s)) rounding does not leak in.
        for r in 0..m {
            beams[(r, j)] = C64::from_polar(scale, PI * s * r as f64);
        }
    }
    Ok(BeamCodebook { beams, beam_angles })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BfPattern {
    Equal,
    Random,
}

impl BfPattern {
    pub fn as_str(self) -> &'static str {
        match self {
            BfPattern::Equal => "equal",
            BfPattern::Random => "random",
        }
    }
}

/// Real nonnegative amplitude weights of one RU in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxWeights {
    pub w: Vec<f64>,
}

impl TxWeights {
    pub fn power(&self) -> f64 {
        self.w.iter().map(|w| w * w).sum()
    }
}

/// Weights whose squared sum equals `power / num_subcarriers`.
///
/// `Equal` splits the per-subcarrier budget uniformly across beams; `Random`
/// draws omega_z ~ U(0,1) and rescales so the budget is met with equality.
pub fn make_weights<R: Rng + ?Sized>(
    pattern: BfPattern,
    num_beams: usize,
    power: f64,
    num_subcarriers: usize,
    rng: &mut R,
) -> Result<TxWeights> {
    if !(power > 0.0) {
        return Err(Error::config(format!("transmit power must be positive, got {power}")));
    }
    if num_beams == 0 || num_subcarriers == 0 {
        return Err(Error::config("make_weights needs Z >= 1 and N >= 1"));
    }
    let budget = power / num_subcarriers as f64;
    let w = match pattern {
        BfPattern::Equal => vec![(budget / num_beams as f64).sqrt(); num_beams],
        BfPattern::Random => {
            let omega: Vec<f64> = (0..num_beams)
                .map(|_| loop {
                    // open interval (0, 1): an all-zero draw cannot be normalized
                    let u: f64 = rng.gen();
                    if u > 0.0 {
                        break u;
                    }
                })
                .collect();
            let alpha = budget / omega.iter().sum::<f64>();
            omega.iter().map(|o| (alpha * o).sqrt()).collect()
        }
    };
    Ok(TxWeights { w })
}

/// x = F w, shared by every subcarrier.
pub fn tx_signal(codebook: &BeamCodebook, weights: &TxWeights) -> Result<Vec<C64>> {
    if weights.w.len() != codebook.num_beams() {
        return Err(Error::Dimension {
            what: "weight vector length vs beam count",
            expected: codebook.num_beams(),
            got: weights.w.len(),
        });
    }
    let m = codebook.num_antennas();
    let mut x = vec![C64::new(0.0, 0.0); m];
    for (z, &w) in weights.w.iter().enumerate() {
        let col = codebook.beams.col(z);
        for (r, xr) in x.iter_mut().enumerate() {
            *xr += col[r] * w;
        }
    }
    Ok(x)
}

/// Generalized delay response: element n is b exp(-j 2 pi tau n df), n = 0..N.
pub fn delay_response(delay: f64, gain: C64, num_subcarriers: usize, spacing: f64) -> Vec<C64> {
    (0..num_subcarriers)
        .map(|n| gain * C64::from_polar(1.0, -2.0 * PI * delay * n as f64 * spacing))
        .collect()
}
