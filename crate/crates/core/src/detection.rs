//! Uplink data phase, linear combiners and symbol detectors.
//!
//! A linear combiner is an MN×K matrix `V`; UE k's combined sample is
//! `r_k = v_kᴴ y`. Conjugate beamforming uses `V = H` (or `Ĥ`), which is the
//! same as summing per-AP matched filters `h_mkᴴ y_m` at the CPU. MMSE uses
//! `V = (H D Hᴴ + ψ I)⁻¹ H`, evaluated through the K×K push-through form.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, inverse, solve_hpd, CMat, CVec};
use crate::rng::complex_normal;

/// Samples with no interference (or noise) report this SIR/SINR.
pub const SIR_CAP_DB: f64 = 200.0;
pub const DEFAULT_JOINT_K_MAX: usize = 4;
const JOINT_HYPOTHESIS_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    pub name: String,
    pub points: Vec<Complex64>,
}

impl Constellation {
    pub fn bpsk() -> Self {
        Self { name: "bpsk".into(), points: vec![c(1.0), c(-1.0)] }
    }

    /// Gray-ordered QPSK at ±1/√2 ± ι/√2.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]
            .iter()
            .map(|&(x, y)| Complex64::new(a * x, a * y))
            .collect();
        Self { name: "qpsk".into(), points }
    }

    pub fn qam16() -> Self {
        let s = 1.0 / 10f64.sqrt();
        let levels = [-3.0, -1.0, 1.0, 3.0];
        let points = levels
            .iter()
            .flat_map(|&i| levels.iter().map(move |&q| Complex64::new(i * s, q * s)))
            .collect();
        Self { name: "qam16".into(), points }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "bpsk" => Ok(Self::bpsk()),
            "qpsk" => Ok(Self::qpsk()),
            "qam16" | "16qam" => Ok(Self::qam16()),
            other => Err(Error::InvalidConfig(format!("unknown constellation '{other}'"))),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidConfig("empty constellation".into()));
        }
        if (self.mean_energy() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!("constellation energy {} is not 1", self.mean_energy())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPhaseConfig {
    pub symbol_powers: Vec<f64>,
    pub noise_power: f64,
    pub constellation: Constellation,
}

impl DataPhaseConfig {
    pub fn validate(&self) -> Result<()> {
        self.constellation.validate()?;
        if self.symbol_powers.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig("symbol powers must be positive".into()));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad noise power {}", self.noise_power)));
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.symbol_powers.iter().map(|e| e.sqrt()).collect()
    }
}

/// Draws uniform symbol indices and the transmitted vector `s_k = √E_s,k·S[i_k]`.
pub fn draw_symbols<R: Rng + ?Sized>(cfg: &DataPhaseConfig, rng: &mut R) -> (Vec<usize>, CVec) {
    let q = cfg.constellation.len();
    let idx: Vec<usize> = cfg.symbol_powers.iter().map(|_| rng.random_range(0..q)).collect();
    let s = CVec::from_iterator(
        idx.len(),
        idx.iter().zip(&cfg.symbol_powers).map(|(&i, &e)| cfg.constellation.points[i] * e.sqrt()),
    );
    (idx, s)
}

#[derive(Debug, Clone)]
pub struct UplinkSignal {
    pub y: CVec,
    /// The realized noise `√N0·w`.
    pub noise: CVec,
}

/// `y = H s + √N0 w` with `w ~ CN(0, I)`.
pub fn uplink_receive<R: Rng + ?Sized>(h: &CMat, s: &CVec, n0: f64, rng: &mut R) -> Result<UplinkSignal> {
    if h.ncols() != s.len() {
        return Err(Error::InvalidConfig(format!("{} symbols for {} users", s.len(), h.ncols())));
    }
    let sn = n0.sqrt();
    let noise = CVec::from_fn(h.nrows(), |_, _| complex_normal(rng) * sn);
    Ok(UplinkSignal { y: h * s + &noise, noise })
}

/// Channel knowledge available to a receiver.
#[derive(Debug, Clone, Copy)]
pub enum CsiView<'a> {
    Accurate(&'a CMat),
    Estimated { estimate: &'a CMat, truth: &'a CMat },
}

impl<'a> CsiView<'a> {
    /// The matrix the receiver actually uses.
    pub fn known(&self) -> &'a CMat {
        match *self {
            CsiView::Accurate(h) => h,
            CsiView::Estimated { estimate, .. } => estimate,
        }
    }

    pub fn truth(&self) -> &'a CMat {
        match *self {
            CsiView::Accurate(h) => h,
            CsiView::Estimated { truth, .. } => truth,
        }
    }
}

/// Result of linear combining.
///
/// `gains[(k, l)]` multiplies `s_l` in `r_k` through the known channel
/// (`v_kᴴ h_l` or `v_kᴴ ĥ_l`); `error_gains` holds `v_kᴴ e_l` under estimated
/// CSI. The remaining term `v_kᴴ·√N0·w` has variance `noise_var[k]`.
#[derive(Debug, Clone)]
pub struct CombinerOutput {
    pub r: CVec,
    pub combiner: CMat,
    pub gains: CMat,
    pub error_gains: Option<CMat>,
    pub noise_var: Vec<f64>,
}

impl CombinerOutput {
    /// Known plus error gains.
    pub fn total_gains(&self) -> CMat {
        match &self.error_gains {
            Some(e) => &self.gains + e,
            None => self.gains.clone(),
        }
    }

    /// `r − (total_gains·s + Vᴴ·noise)`; zero up to rounding.
    pub fn residual(&self, s: &CVec, noise: &CVec) -> CVec {
        &self.r - self.total_gains() * s - self.combiner.adjoint() * noise
    }
}

fn finish(combiner: CMat, csi: CsiView<'_>, y: &CVec, n0: f64) -> CombinerOutput {
    let vh = combiner.adjoint();
    let gains = &vh * csi.known();
    let error_gains = match csi {
        CsiView::Accurate(_) => None,
        CsiView::Estimated { estimate, truth } => Some(&vh * (truth - estimate)),
    };
    let noise_var = combiner.column_iter().map(|v| n0 * v.norm_squared()).collect();
    CombinerOutput { r: &vh * y, combiner, gains, error_gains, noise_var }
}

/// Distributed conjugate beamforming: `r_k = Σ_m h_mkᴴ y_m`.
pub fn conjugate_combine(csi: CsiView<'_>, y: &CVec, n0: f64) -> CombinerOutput {
    finish(csi.known().clone(), csi, y, n0)
}

/// `V = (H D Hᴴ + ψI)⁻¹ H` via `H D^{1/2}(D^{1/2} G D^{1/2} + ψI)⁻¹ D^{−1/2}`.
pub fn mmse_matrix(h: &CMat, symbol_powers: &[f64], regularizer: f64) -> Result<CMat> {
    let k = h.ncols();
    if symbol_powers.len() != k {
        return Err(Error::InvalidConfig(format!("{} symbol powers for {k} users", symbol_powers.len())));
    }
    if !(regularizer > 0.0) {
        return Err(Error::InvalidConfig(format!("MMSE regularizer must be positive, got {regularizer}")));
    }
    let d: Vec<f64> = symbol_powers.iter().map(|e| e.sqrt()).collect();
    let g = h.adjoint() * h;
    let a = CMat::from_fn(k, k, |i, j| {
        let v = g[(i, j)] * (d[i] * d[j]);
        if i == j {
            v + regularizer
        } else {
            v
        }
    });
    let rhs = CMat::from_fn(k, k, |i, j| if i == j { c(1.0 / d[i]) } else { c(0.0) });
    let inner = solve_hpd(&a, &rhs)?;
    let hd = CMat::from_fn(h.nrows(), k, |r, j| h[(r, j)] * d[j]);
    Ok(hd * inner)
}

/// MN×MN explicit-inverse route to the same combiner; for cross-checks only.
pub fn mmse_matrix_explicit(h: &CMat, symbol_powers: &[f64], regularizer: f64) -> Result<CMat> {
    let d = CMat::from_diagonal(&CVec::from_iterator(symbol_powers.len(), symbol_powers.iter().map(|&e| c(e))));
    let r = h * d * h.adjoint() + CMat::identity(h.nrows(), h.nrows()) * c(regularizer);
    Ok(inverse(&r)? * h)
}

/// Centralized MMSE combining with regularizer `ψ` (`N0` for accurate CSI).
pub fn mmse_combine(csi: CsiView<'_>, y: &CVec, symbol_powers: &[f64], regularizer: f64, n0: f64) -> Result<CombinerOutput> {
    let v = mmse_matrix(csi.known(), symbol_powers, regularizer)?;
    Ok(finish(v, csi, y, n0))
}

/// `argmin_i |r − gain·S[i]|`, lowest index on ties. `gain` includes the
/// symbol amplitude `√E_s`.
pub fn stream_hard_detect(r: Complex64, gain: Complex64, s: &Constellation) -> Result<usize> {
    if gain.norm_sqr() == 0.0 || !gain.is_finite() {
        return Err(Error::DetectionUndefined(format!("effective gain {gain} is not usable")));
    }
    let mut best = (0, f64::INFINITY);
    for (i, p) in s.points.iter().enumerate() {
        let d = (r - gain * p).norm_sqr();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best.0)
}

fn normalize_log_likelihoods(mut logl: Vec<f64>) -> Vec<f64> {
    let top = logl.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logl.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    logl.iter_mut().for_each(|v| *v /= total);
    logl
}

/// Posterior over the constellation assuming Gaussian interference plus
/// noise of the given power.
pub fn stream_soft_probs(r: Complex64, gain: Complex64, power: f64, s: &Constellation) -> Result<Vec<f64>> {
    if !(power > 0.0) {
        return Err(Error::InvalidConfig(format!("interference-plus-noise power must be positive, got {power}")));
    }
    Ok(normalize_log_likelihoods(s.points.iter().map(|p| -(r - gain * p).norm_sqr() / power).collect()))
}

fn joint_guard(k: usize, q: usize, k_max: usize) -> Result<usize> {
    let count = (q as f64).powi(k as i32);
    if k > k_max || count > JOINT_HYPOTHESIS_LIMIT {
        return Err(Error::ComplexityGuard(format!("{q}^{k} joint hypotheses (K limit {k_max})")));
    }
    Ok(count as usize)
}

/// Visits every hypothesis in index order `Σ_k i_k·|S|^k`, passing its
/// squared distance `‖y − H diag(a) s‖²`.
fn for_each_hypothesis(y: &CVec, h: &CMat, amplitudes: &[f64], s: &Constellation, k_max: usize, mut f: impl FnMut(usize, f64)) -> Result<()> {
    let k = h.ncols();
    if amplitudes.len() != k || y.len() != h.nrows() {
        return Err(Error::InvalidConfig("joint detection dimensions do not match".into()));
    }
    let q = s.len();
    let total = joint_guard(k, q, k_max)?;
    // precompute each user's contribution for each constellation point
    let cols: Vec<Vec<CVec>> = (0..k)
        .map(|j| s.points.iter().map(|p| h.column(j) * (*p * amplitudes[j])).collect())
        .collect();
    let mut digits = vec![0usize; k];
    for idx in 0..total {
        let mut resid = y.clone();
        for (j, &dj) in digits.iter().enumerate() {
            resid -= &cols[j][dj];
        }
        f(idx, resid.norm_squared());
        for d in digits.iter_mut() {
            *d += 1;
            if *d < q {
                break;
            }
            *d = 0;
        }
    }
    Ok(())
}

/// Splits a joint hypothesis index into per-user symbol indices.
pub fn hypothesis_symbols(mut idx: usize, k: usize, q: usize) -> Vec<usize> {
    (0..k)
        .map(|_| {
            let d = idx % q;
            idx /= q;
            d
        })
        .collect()
}

/// Exhaustive ML detection over `S^K`.
pub fn joint_hard_detect(y: &CVec, h: &CMat, amplitudes: &[f64], s: &Constellation, k_max: usize) -> Result<Vec<usize>> {
    let mut best = (0, f64::INFINITY);
    for_each_hypothesis(y, h, amplitudes, s, k_max, |i, d| {
        if d < best.1 {
            best = (i, d);
        }
    })?;
    Ok(hypothesis_symbols(best.0, h.ncols(), s.len()))
}

/// Posterior over `S^K`, indexed as in [`hypothesis_symbols`].
pub fn joint_soft_probs(y: &CVec, h: &CMat, amplitudes: &[f64], s: &Constellation, noise_power: f64, k_max: usize) -> Result<Vec<f64>> {
    if !(noise_power > 0.0) {
        return Err(Error::InvalidConfig(format!("noise power must be positive, got {noise_power}")));
    }
    let mut logl = Vec::new();
    for_each_hypothesis(y, h, amplitudes, s, k_max, |_, d| logl.push(-d / noise_power))?;
    Ok(normalize_log_likelihoods(logl))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub sir: f64,
    pub sinr: f64,
}

fn capped_ratio(num: f64, den: f64) -> f64 {
    let cap = 10f64.powf(SIR_CAP_DB / 10.0);
    if den <= 0.0 {
        return if num > 0.0 { cap } else { 0.0 };
    }
    (num / den).min(cap)
}

/// Instantaneous per-UE SIR and SINR of a combiner output. Under estimated
/// CSI the signal is the known-channel gain and the own-error term joins the
/// interference.
pub fn sinr_samples(out: &CombinerOutput, symbol_powers: &[f64]) -> Vec<SinrSample> {
    let total = out.total_gains();
    let k = out.gains.nrows();
    (0..k)
        .map(|i| {
            let signal = out.gains[(i, i)].norm_sqr() * symbol_powers[i];
            let mut interference: f64 = (0..total.ncols()).filter(|&l| l != i).map(|l| total[(i, l)].norm_sqr() * symbol_powers[l]).sum();
            if let Some(e) = &out.error_gains {
                interference += e[(i, i)].norm_sqr() * symbol_powers[i];
            }
            SinrSample {
                sir: capped_ratio(signal, interference),
                sinr: capped_ratio(signal, interference + out.noise_var[i]),
            }
        })
        .collect()
}
