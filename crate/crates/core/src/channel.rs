//! LoS/NLoS channel realizations.
//!
//! The channel from UE k to AP m is `δ_mk·h̄_mk + √β_mk·ḣ_mk`, with a
//! deterministic steering-vector LoS part and an i.i.d. CN(0, I) NLoS part.
//! Per-AP blocks are stacked AP-major into an MN×K matrix.

use std::f64::consts::TAU;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayParams, LinkMetrics, LinkSet};
use crate::linalg::{CMat, CVec};
use crate::rng::complex_normal;

/// ULA response: entry `i` is `exp(ι·2π·(d/λ)·i·sin θ)`.
pub fn steering_vector(theta: f64, n: usize, spacing_m: f64, wavelength_m: f64) -> CVec {
    let step = TAU * spacing_m / wavelength_m * theta.sin();
    CVec::from_iterator(n, (0..n).map(|i| Complex64::from_polar(1.0, step * i as f64)))
}

/// LoS channel `a(θ)·√(G_m G_k)·(ℓ'ℓ/(4πx))·exp(ι2πx/λ)` of one link.
pub fn los_channel(link: &LinkMetrics, array: &ArrayParams) -> CVec {
    let phase = Complex64::from_polar(link.los_amplitude, TAU * link.x_m / array.wavelength_m);
    steering_vector(link.theta, array.n_antennas, array.spacing_m, array.wavelength_m) * phase
}

/// Stacked, unmasked LoS channels for every link (MN×K).
pub fn los_field(links: &LinkSet) -> CMat {
    let n = links.n_antennas();
    let mut out = CMat::zeros(links.n_aps * n, links.n_ues);
    for m in 0..links.n_aps {
        for k in 0..links.n_ues {
            let h = los_channel(links.get(m, k), &links.array);
            out.view_mut((m * n, k), (n, 1)).copy_from(&h);
        }
    }
    out
}

/// Whether LoS indicators are fixed per layout drop or redrawn per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosRedraw {
    #[default]
    PerDrop,
    PerTrial,
}

/// M×K binary LoS indicators, AP-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LosIndicators {
    pub n_aps: usize,
    pub n_ues: usize,
    pub bits: Vec<bool>,
}

impl LosIndicators {
    pub fn all(n_aps: usize, n_ues: usize, value: bool) -> Self {
        Self { n_aps, n_ues, bits: vec![value; n_aps * n_ues] }
    }

    #[inline]
    pub fn get(&self, m: usize, k: usize) -> bool {
        self.bits[m * self.n_ues + k]
    }

    /// Number of APs with a LoS path to UE `k`.
    pub fn los_count(&self, k: usize) -> usize {
        (0..self.n_aps).filter(|&m| self.get(m, k)).count()
    }

    /// Indicators as 0/1 probabilities, for moment evaluation conditional on δ.
    pub fn as_probabilities(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}

/// Independent Bernoulli(p_mk) LoS draws.
pub fn draw_los_indicators<R: Rng + ?Sized>(links: &LinkSet, rng: &mut R) -> LosIndicators {
    let bits = links.links.iter().map(|l| rng.random::<f64>() < l.p_los).collect();
    LosIndicators { n_aps: links.n_aps, n_ues: links.n_ues, bits }
}

#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub delta: LosIndicators,
    /// Stacked channel H (MN×K).
    pub h: CMat,
    /// Unmasked LoS channels h̄, shared across realizations of a drop.
    pub los_part: Arc<CMat>,
    /// Unscaled NLoS fading ḣ.
    pub nlos_part: CMat,
}

/// Draws `H` with block (m,k) equal to `δ_mk·h̄_mk + √β_mk·ḣ_mk`.
pub fn draw_channel<R: Rng + ?Sized>(
    links: &LinkSet,
    los_part: &Arc<CMat>,
    delta: &LosIndicators,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let n = links.n_antennas();
    let rows = links.n_aps * n;
    if delta.n_aps != links.n_aps || delta.n_ues != links.n_ues {
        return Err(Error::InvalidConfig(format!(
            "LoS indicator shape {}x{} does not match {}x{} links",
            delta.n_aps, delta.n_ues, links.n_aps, links.n_ues
        )));
    }
    if los_part.nrows() != rows || los_part.ncols() != links.n_ues {
        return Err(Error::InvalidConfig("LoS field shape does not match links".into()));
    }
    let mut nlos = CMat::zeros(rows, links.n_ues);
    let mut h = CMat::zeros(rows, links.n_ues);
    for k in 0..links.n_ues {
        for m in 0..links.n_aps {
            let sb = links.get(m, k).beta.sqrt();
            let los_on = delta.get(m, k);
            for i in 0..n {
                let r = m * n + i;
                let z = complex_normal(rng);
                nlos[(r, k)] = z;
                h[(r, k)] = if los_on { los_part[(r, k)] + z * sb } else { z * sb };
            }
        }
    }
    Ok(ChannelRealization { delta: delta.clone(), h, los_part: Arc::clone(los_part), nlos_part: nlos })
}

/// Writes a matrix row-major as interleaved (re, im) little-endian f64 pairs.
pub fn write_matrix_le<W: Write>(h: &CMat, mut w: W) -> Result<()> {
    for r in 0..h.nrows() {
        for c in 0..h.ncols() {
            let z = h[(r, c)];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a matrix written by [`write_matrix_le`].
pub fn read_matrix_le(bytes: &[u8], rows: usize, cols: usize) -> Result<CMat> {
    if bytes.len() != rows * cols * 16 {
        return Err(Error::InvalidConfig(format!("expected {} bytes, got {}", rows * cols * 16, bytes.len())));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
    Ok(CMat::from_fn(rows, cols, |r, c| {
        let i = 2 * (r * cols + c);
        Complex64::new(f(i), f(i + 1))
    }))
}
