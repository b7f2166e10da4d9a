//! Brute-force Monte-Carlo oracles for the gain statistics, and the suite
//! that scores the closed forms against them.
//!
//! Every draw re-samples the LoS indicators, so the oracles estimate the
//! moments averaged over blockage, which is what the closed forms describe.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exact::{var_gkl_closed_form, ConjMoments, CsiMode, MomentModel};
use super::printed::{est_csi_printed, gkk_printed, gkl_printed, zk_variance_printed};
use crate::channel::los_channel;
use crate::error::{Error, Result};
use crate::estimation::{EstimatorBank, PilotPowerMode};
use crate::geometry::{link_metrics, place_uniform, ArrayParams, BlockageEnvironment, LinkSet, PathlossParams, PlacementSpec};
use crate::linalg::{CVec, ZERO};
use crate::rng::{complex_normal, stream, tag};

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Complex sample mean; `se` is `√(E|x − x̄|²/n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub value: Complex64,
    pub se: f64,
}

pub fn mean_estimate(x: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { value: m, se: (v / n).sqrt() }
}

pub fn complex_mean_estimate(x: &[Complex64]) -> ComplexEstimate {
    let n = x.len() as f64;
    let m = x.iter().sum::<Complex64>() / n;
    let v = x.iter().map(|v| (v - m).norm_sqr()).sum::<f64>() / (n - 1.0);
    ComplexEstimate { value: m, se: (v / n).sqrt() }
}

/// Sample variance `E|x − E x|²` with a delta-method standard error.
pub fn variance_estimate(x: &[f64]) -> Estimate {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let dev: Vec<f64> = x.iter().map(|v| (v - m).powi(2)).collect();
    let e = mean_estimate(&dev);
    let n = x.len() as f64;
    Estimate { value: e.value * n / (n - 1.0), se: e.se }
}

pub fn complex_variance_estimate(x: &[Complex64]) -> Estimate {
    let m = x.iter().sum::<Complex64>() / x.len() as f64;
    let dev: Vec<f64> = x.iter().map(|v| (v - m).norm_sqr()).collect();
    let e = mean_estimate(&dev);
    let n = x.len() as f64;
    Estimate { value: e.value * n / (n - 1.0), se: e.se }
}

/// Raw draws of `g_kk`, `g_kl` and `z_k/√N0` with LoS states re-drawn each time.
#[derive(Debug, Clone)]
pub struct GainDraws {
    pub gkk: Vec<f64>,
    pub gkl: Vec<Complex64>,
    pub zk: Vec<Complex64>,
}

fn draw_column<R: Rng + ?Sized>(links: &LinkSet, probs: &[f64], hbar: &[CVec], k: usize, rng: &mut R) -> Vec<CVec> {
    let n = links.n_antennas();
    (0..links.n_aps)
        .map(|m| {
            let l = links.get(m, k);
            let los = rng.random::<f64>() < probs[m * links.n_ues + k];
            let sb = l.beta.sqrt();
            CVec::from_fn(n, |i, _| {
                let z = complex_normal(rng) * sb;
                if los {
                    z + hbar[m * links.n_ues + k][i]
                } else {
                    z
                }
            })
        })
        .collect()
}

pub fn draw_gains(links: &LinkSet, probs: &[f64], k: usize, l: usize, draws: usize, seed: u64) -> GainDraws {
    let hbar: Vec<CVec> = links.links.iter().map(|lm| los_channel(lm, &links.array)).collect();
    let mut rng = stream(seed, &[tag::ORACLE, k as u64, l as u64]);
    let mut out = GainDraws { gkk: Vec::with_capacity(draws), gkl: Vec::with_capacity(draws), zk: Vec::with_capacity(draws) };
    for _ in 0..draws {
        let hk = draw_column(links, probs, &hbar, k, &mut rng);
        let hl = draw_column(links, probs, &hbar, l, &mut rng);
        let (mut gkk, mut gkl, mut zk) = (0.0, ZERO, ZERO);
        for m in 0..links.n_aps {
            gkk += hk[m].norm_squared();
            gkl += hk[m].dotc(&hl[m]);
            for i in 0..hk[m].len() {
                zk += hk[m][i].conj() * complex_normal(&mut rng);
            }
        }
        out.gkk.push(gkk);
        out.gkl.push(gkl);
        out.zk.push(zk);
    }
    out
}

/// Draws of `ĝ_kk = ‖ĥ_k‖²` and `g̃_kk = ĥ_kᴴe_k` through the actual LMMSE estimator.
pub fn draw_estimated_gains(links: &LinkSet, probs: &[f64], bank: &EstimatorBank, k: usize, draws: usize, seed: u64) -> (Vec<f64>, Vec<Complex64>) {
    let n = links.n_antennas();
    let hbar: Vec<CVec> = links.links.iter().map(|lm| los_channel(lm, &links.array)).collect();
    let mut rng = stream(seed, &[tag::ORACLE, k as u64, u64::MAX]);
    let s0 = bank.noise_power.sqrt();
    let (mut ghat, mut gtilde) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        let (mut a, mut b) = (0.0, ZERO);
        for m in 0..links.n_aps {
            let lm = links.get(m, k);
            let los = rng.random::<f64>() < probs[m * links.n_ues + k];
            let sb = lm.beta.sqrt();
            let h = CVec::from_fn(n, |i, _| {
                let z = complex_normal(&mut rng) * sb;
                if los {
                    z + hbar[m * links.n_ues + k][i]
                } else {
                    z
                }
            });
            let est = bank.link(m, k, los);
            let sp = est.pilot_power.sqrt();
            let y = CVec::from_fn(n, |i, _| h[i] * sp + complex_normal(&mut rng) * s0);
            let hh = est.estimate(&y);
            let e = &h - &hh;
            a += hh.norm_squared();
            b += hh.dotc(&e);
        }
        ghat.push(a);
        gtilde.push(b);
    }
    (ghat, gtilde)
}

/// One closed form scored against an oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub geometry: usize,
    pub quantity: String,
    /// `exact` (moment engine), `printed` (stated expression) or `closed_form`.
    pub source: String,
    pub formula: f64,
    /// Imaginary part for complex-valued closed forms.
    pub formula_im: f64,
    pub oracle: f64,
    pub oracle_im: f64,
    pub se: f64,
    /// `|formula − oracle| / se`.
    pub z: f64,
    /// Part of the pass/fail verdict; informational checks are only logged.
    pub required: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryCase {
    pub index: usize,
    pub n_aps: usize,
    pub n_antennas: usize,
    pub n_ues: usize,
    pub area_side_km: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub draws: usize,
    pub seed: u64,
    pub z_threshold: f64,
    pub geometries: Vec<GeometryCase>,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.required || c.pass)
    }

    pub fn required_failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.required && !c.pass).collect()
    }

    pub fn flagged(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.required && !c.pass).collect()
    }
}

/// Draws a random validation geometry with M ≤ 32, N ≤ 4 and 2 ≤ K ≤ 8.
pub fn random_case(index: usize, seed: u64) -> GeometryCase {
    let mut rng = stream(seed, &[tag::PLACEMENT, index as u64, 77]);
    GeometryCase {
        index,
        n_aps: rng.random_range(1..=32),
        n_antennas: rng.random_range(1..=4),
        n_ues: rng.random_range(2..=8),
        area_side_km: rng.random_range(0.03..0.3),
        seed: rng.random(),
    }
}

pub fn case_links(case: &GeometryCase) -> Result<LinkSet> {
    let spec = PlacementSpec {
        n_aps: case.n_aps,
        n_ues: case.n_ues,
        area_side_km: case.area_side_km,
        ap_height_m: 10.0,
        ue_height_m: 1.5,
        ap_gain: 1.0,
        ue_gain: 1.0,
        array: ArrayParams::half_wavelength(case.n_antennas, 2e9),
        env: BlockageEnvironment::default(),
    };
    link_metrics(&place_uniform(&spec, case.seed)?, &PathlossParams::default())
}

struct Scorer<'a> {
    geometry: usize,
    z_threshold: f64,
    out: &'a mut Vec<Check>,
}

impl Scorer<'_> {
    fn real(&mut self, quantity: &str, source: &str, formula: f64, oracle: Estimate, required: bool) {
        let z = (formula - oracle.value).abs() / oracle.se;
        self.push(quantity, source, Complex64::new(formula, 0.0), Complex64::new(oracle.value, 0.0), oracle.se, z, required);
    }

    fn complex(&mut self, quantity: &str, source: &str, formula: Complex64, oracle: ComplexEstimate, required: bool) {
        let z = (formula - oracle.value).norm() / oracle.se;
        self.push(quantity, source, formula, oracle.value, oracle.se, z, required);
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, quantity: &str, source: &str, f: Complex64, o: Complex64, se: f64, z: f64, required: bool) {
        // a degenerate oracle (se = 0) passes only on exact agreement
        let z = if se > 0.0 { z } else if f == o { 0.0 } else { f64::INFINITY };
        self.out.push(Check {
            geometry: self.geometry,
            quantity: quantity.into(),
            source: source.into(),
            formula: f.re,
            formula_im: f.im,
            oracle: o.re,
            oracle_im: o.im,
            se,
            z,
            required,
            pass: z < self.z_threshold,
        });
    }
}

/// Scores one geometry (UE pair k = 0, l = 1).
pub fn score_case(case: &GeometryCase, draws: usize, seed: u64, z_threshold: f64) -> Result<Vec<Check>> {
    if case.n_ues < 2 {
        return Err(Error::InvalidConfig("validation needs at least two UEs".into()));
    }
    let links = case_links(case)?;
    let probs = links.los_probabilities();
    let (k, l) = (0, 1);
    let gd = draw_gains(&links, &probs, k, l, draws, derive(seed, case.index));
    let bank = EstimatorBank::new(&links, PilotPowerMode::PerLinkSnr { snr: 100.0 }, 1.0)?;
    let model = MomentModel::new(&links, Some(&bank))?;
    let acc = ConjMoments::compute(&model, &probs, CsiMode::Accurate)?;
    let est = ConjMoments::compute(&model, &probs, CsiMode::Estimated)?;
    let pk = gkk_printed(&links, &probs, k);
    let pl = gkl_printed(&links, &probs, k, l);

    let mut checks = Vec::new();
    let mut s = Scorer { geometry: case.index, z_threshold, out: &mut checks };

    let gkk_sq: Vec<f64> = gd.gkk.iter().map(|g| g * g).collect();
    let gkk_4: Vec<f64> = gd.gkk.iter().map(|g| g.powi(4)).collect();
    let mean_gkk = mean_estimate(&gd.gkk);
    let var_gkk = variance_estimate(&gd.gkk);
    let second_gkk = mean_estimate(&gkk_sq);
    let fourth_gkk = mean_estimate(&gkk_4);
    let var_abs_sq = variance_estimate(&gkk_sq);
    s.real("mean_gkk", "printed", pk.mean, mean_gkk, true);
    s.real("var_gkk", "printed", pk.var, var_gkk, true);
    s.real("second_gkk", "printed_components", pk.second_components, second_gkk, false);
    s.real("second_gkk", "printed_bound_form", pk.second_bound_form, second_gkk, false);
    s.real("fourth_gkk", "printed", pk.fourth, fourth_gkk, false);
    s.real("var_abs_sq_gkk", "printed", pk.var_abs_sq, var_abs_sq, false);
    s.real("mean_gkk", "exact", acc.mean_gkk[k], mean_gkk, false);
    s.real("var_gkk", "exact", acc.var_gkk(k), var_gkk, false);
    s.real("second_gkk", "exact", acc.second_gkk[k], second_gkk, false);
    s.real("fourth_gkk", "exact", acc.fourth_gkk[k], fourth_gkk, false);
    s.real("var_abs_sq_gkk", "exact", acc.var_abs_sq[k], var_abs_sq, false);

    let mean_gkl = complex_mean_estimate(&gd.gkl);
    let gkl_sq: Vec<f64> = gd.gkl.iter().map(|g| g.norm_sqr()).collect();
    let second_gkl = mean_estimate(&gkl_sq);
    let var_gkl = complex_variance_estimate(&gd.gkl);
    s.complex("mean_gkl", "printed_zero_index_conj", pl.mean_zero_index.conj(), mean_gkl, true);
    s.complex("mean_gkl", "printed_literal", pl.mean_literal, mean_gkl, false);
    s.real("var_gkl", "closed_form", var_gkl_closed_form(&links, &probs, k, l), var_gkl, true);
    s.complex("var_gkl", "printed", pl.var, ComplexEstimate { value: Complex64::new(var_gkl.value, 0.0), se: var_gkl.se }, false);
    s.complex("second_gkl", "printed", pl.second, ComplexEstimate { value: Complex64::new(second_gkl.value, 0.0), se: second_gkl.se }, false);
    s.complex("mean_gkl", "exact", acc.mean_gkl[(k, l)], mean_gkl, false);
    s.real("second_gkl", "exact", acc.second_gkl[k][l], second_gkl, false);
    s.real("var_gkl", "exact", acc.var_gkl(k, l), var_gkl, false);

    let zk_sq: Vec<f64> = gd.zk.iter().map(|z| z.norm_sqr()).collect();
    let var_zk = mean_estimate(&zk_sq);
    s.real("var_zk_over_n0", "printed", zk_variance_printed(&links, &probs, k), var_zk, true);
    s.real("var_zk_over_n0", "exact", acc.noise_gain[k], var_zk, false);

    // estimated CSI, scored against the actual LMMSE estimator
    let (ghat, gtilde) = draw_estimated_gains(&links, &probs, &bank, k, draws, derive(seed, case.index));
    let ghat_sq: Vec<f64> = ghat.iter().map(|g| g * g).collect();
    let gtilde_sq: Vec<f64> = gtilde.iter().map(|g| g.norm_sqr()).collect();
    let (m_ghat, s_ghat, s_gtilde) = (mean_estimate(&ghat), mean_estimate(&ghat_sq), mean_estimate(&gtilde_sq));
    let pe = est_csi_printed(&links, &probs, &bank, k)?;
    s.real("mean_ghat", "printed", pe.mean_ghat, m_ghat, false);
    s.real("second_ghat", "printed", pe.second_ghat, s_ghat, false);
    s.real("second_gtilde", "printed", pe.second_gtilde, s_gtilde, false);
    s.real("mean_ghat", "exact", est.mean_gkk[k], m_ghat, false);
    s.real("second_ghat", "exact", est.second_gkk[k], s_ghat, false);
    s.real("second_gtilde", "exact", est.second_gtilde[k], s_gtilde, false);
    Ok(checks)
}

fn derive(seed: u64, index: usize) -> u64 {
    crate::rng::derive_seed(seed, &[tag::ORACLE, index as u64])
}

/// Runs the oracle suite on `n_geometries` random geometries.
pub fn validation_suite(n_geometries: usize, draws: usize, seed: u64, z_threshold: f64) -> Result<ValidationReport> {
    if draws < 2 {
        return Err(Error::InvalidConfig("the oracle needs at least two draws".into()));
    }
    let geometries: Vec<GeometryCase> = (0..n_geometries).map(|i| random_case(i, seed)).collect();
    let per: Vec<Vec<Check>> = geometries.par_iter().map(|g| score_case(g, draws, seed, z_threshold)).collect::<Result<_>>()?;
    Ok(ValidationReport { draws, seed, z_threshold, geometries, checks: per.into_iter().flatten().collect() })
}
