//! Monte-Carlo rates for one network drop, alongside the matching bounds.
//!
//! Fading is drawn once per trial and reused across the SNR grid. Every trial
//! owns its own random streams, so results do not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{conj_denominator, conj_rate_bounds, joint_bound, mmse_rate_bound, MmseMoments};
use super::exact::{error_power_per_antenna, ConjMoments, CsiMode, MomentModel};
use crate::channel::{draw_channel, draw_los_indicators, LosIndicators, LosRedraw};
use crate::detection::SIR_CAP_DB;
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::geometry::LinkSet;
use crate::linalg::{c, cholesky, log2_det_hpd, log2_det_i_plus_scaled, CMat};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Conjugate,
    Joint,
    Mmse,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Conjugate => "conj",
            Scheme::Joint => "joint",
            Scheme::Mmse => "mmse",
        }
    }
}

pub fn csi_name(csi: CsiMode) -> &'static str {
    match csi {
        CsiMode::Accurate => "acc",
        CsiMode::Estimated => "est",
    }
}

/// Data-phase noise power for a data SNR `E_s/N0` in dB.
pub fn noise_power(snr_db: f64, symbol_power: f64) -> f64 {
    symbol_power * 10f64.powf(-snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub snr_db: Vec<f64>,
    /// Common `E_s` of all UEs.
    pub symbol_power: f64,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub csi: Vec<CsiMode>,
    pub los_redraw: LosRedraw,
    /// Fixed MMSE regulariser `ψ`; by default `N0` with accurate CSI and
    /// `σ_y²` with estimated CSI.
    pub mmse_regularizer: Option<f64>,
    pub seed: u64,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(Error::InvalidConfig("at least two trials are needed for standard errors".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("SNR grid must be non-empty and finite".into()));
        }
        if !(self.symbol_power > 0.0 && self.symbol_power.is_finite()) {
            return Err(Error::InvalidConfig(format!("symbol power must be positive, got {}", self.symbol_power)));
        }
        if let Some(psi) = self.mmse_regularizer {
            if !(psi > 0.0 && psi.is_finite()) {
                return Err(Error::InvalidConfig(format!("MMSE regulariser must be positive, got {psi}")));
            }
        }
        Ok(())
    }
}

/// A single drop: link metrics, its LoS field and (for estimated CSI) the
/// estimator bank.
#[derive(Debug, Clone)]
pub struct DropInput<'a> {
    pub links: &'a LinkSet,
    pub los: Arc<CMat>,
    pub bank: Option<&'a EstimatorBank>,
    /// LoS state of the drop; ignored with per-trial redraws.
    pub delta: LosIndicators,
    pub drop_index: u64,
}

/// One SNR point of one (scheme, CSI) series; sum rates in bit/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub snr_db: f64,
    pub empirical: f64,
    pub empirical_se: f64,
    pub upper: f64,
    pub upper_se: f64,
    pub lower: f64,
    pub lower_se: f64,
    /// Joint detection only: the lower bound without the `E log2 det Ψ` term.
    pub approx: Option<f64>,
    /// Set when a Gram matrix was singular and the lower bound fell back to 0.
    pub singular: bool,
    pub per_user: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub scheme: Scheme,
    pub csi: CsiMode,
    pub points: Vec<RatePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRates {
    pub series: Vec<Series>,
}

impl DropRates {
    pub fn get(&self, scheme: Scheme, csi: CsiMode) -> Option<&Series> {
        self.series.iter().find(|s| s.scheme == scheme && s.csi == csi)
    }
}

#[derive(Debug, Clone, Default)]
struct MmseTrial {
    signal: Vec<f64>,
    denom: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct CsiTrial {
    conj: Vec<f64>,
    joint: Vec<f64>,
    psi: Option<f64>,
    mmse: Vec<MmseTrial>,
}

struct Prepared {
    csi: CsiMode,
    moments: Option<ConjMoments>,
    expected_gram: Option<CMat>,
    /// Per-SNR effective noise power (`N0`, or `σ_y²` for estimated CSI).
    effective_noise: Vec<f64>,
    regularizer: Vec<f64>,
}

fn gram(h: &CMat) -> CMat {
    h.ad_mul(h)
}

fn mmse_trial(g: &CMat, cross_err: Option<&CMat>, es: f64, psi: f64, n0: f64) -> Result<MmseTrial> {
    let k = g.nrows();
    let a = g * c(es) + CMat::identity(k, k) * c(psi);
    let w = cholesky(&a)?.inverse();
    let f = &w * g;
    let wgw = &f * &w;
    let ferr = cross_err.map(|x| &w * x);
    let mut out = MmseTrial { signal: Vec::with_capacity(k), denom: Vec::with_capacity(k) };
    for kk in 0..k {
        let mut d = n0 * wgw[(kk, kk)].re;
        for l in 0..k {
            if l != kk {
                d += f[(kk, l)].norm_sqr() * es;
            }
            if let Some(fe) = &ferr {
                d += fe[(kk, l)].norm_sqr() * es;
            }
        }
        out.signal.push(f[(kk, kk)].norm_sqr());
        out.denom.push(d);
    }
    Ok(out)
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// Delete-a-group jackknife of a statistic over `n` samples. Returns the
/// full-sample values and their standard errors.
fn block_jackknife<const P: usize>(n: usize, stat: impl Fn(&dyn Fn(usize) -> bool) -> [f64; P]) -> ([f64; P], [f64; P]) {
    let groups = n.min(25);
    let full = stat(&|_| true);
    let reps: Vec<[f64; P]> = (0..groups).map(|g| stat(&|t| t % groups != g)).collect();
    let mut se = [0.0; P];
    for p in 0..P {
        let mean = reps.iter().map(|r| r[p]).sum::<f64>() / groups as f64;
        let ss: f64 = reps.iter().map(|r| (r[p] - mean).powi(2)).sum();
        se[p] = ((groups as f64 - 1.0) / groups as f64 * ss).sqrt();
    }
    (full, se)
}

/// Runs the trials of one drop and evaluates every requested series.
pub fn run_drop(cfg: &EngineConfig, input: &DropInput<'_>) -> Result<DropRates> {
    cfg.validate()?;
    let links = input.links;
    let (k_users, es) = (links.n_ues, cfg.symbol_power);
    let wants_est = cfg.csi.contains(&CsiMode::Estimated);
    if wants_est && input.bank.is_none() {
        return Err(Error::InvalidConfig("estimated CSI requested without an estimator bank".into()));
    }
    let probs = match cfg.los_redraw {
        LosRedraw::PerDrop => input.delta.as_probabilities(),
        LosRedraw::PerTrial => links.los_probabilities(),
    };
    let model = MomentModel::new(links, input.bank)?;
    let n0s: Vec<f64> = cfg.snr_db.iter().map(|&s| noise_power(s, es)).collect();
    let powers = vec![es; k_users];

    let mut prepared = Vec::new();
    for &csi in &cfg.csi {
        let moments = if cfg.schemes.contains(&Scheme::Conjugate) { Some(ConjMoments::compute(&model, &probs, csi)?) } else { None };
        let expected_gram = if cfg.schemes.contains(&Scheme::Joint) { Some(model.expected_gram(&probs, csi)?) } else { None };
        let err_pa = match csi {
            CsiMode::Accurate => 0.0,
            CsiMode::Estimated => error_power_per_antenna(&model, &probs, &powers)?,
        };
        let effective_noise: Vec<f64> = n0s.iter().map(|n0| n0 + err_pa).collect();
        let regularizer = match cfg.mmse_regularizer {
            Some(psi) => vec![psi; n0s.len()],
            None => effective_noise.clone(),
        };
        prepared.push(Prepared { csi, moments, expected_gram, effective_noise, regularizer });
    }

    let trials: Vec<Vec<CsiTrial>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, input, &prepared, &n0s, t as u64))
        .collect::<Result<_>>()?;

    let mut series = Vec::new();
    for (ci, p) in prepared.iter().enumerate() {
        let samples: Vec<&CsiTrial> = trials.iter().map(|t| &t[ci]).collect();
        for &scheme in &cfg.schemes {
            let points = match scheme {
                Scheme::Conjugate => conj_points(cfg, p, &samples, &n0s)?,
                Scheme::Joint => joint_points(cfg, p, &samples)?,
                Scheme::Mmse => mmse_points(cfg, &samples, k_users),
            };
            series.push(Series { scheme, csi: p.csi, points });
        }
    }
    Ok(DropRates { series })
}

fn run_trial(cfg: &EngineConfig, input: &DropInput<'_>, prepared: &[Prepared], n0s: &[f64], t: u64) -> Result<Vec<CsiTrial>> {
    let links = input.links;
    let es = cfg.symbol_power;
    let delta = match cfg.los_redraw {
        LosRedraw::PerDrop => input.delta.clone(),
        LosRedraw::PerTrial => draw_los_indicators(links, &mut stream(cfg.seed, &[tag::LOS, input.drop_index, t])),
    };
    let real = draw_channel(links, &input.los, &delta, &mut stream(cfg.seed, &[tag::FADING, input.drop_index, t]))?;
    let mut out = Vec::with_capacity(prepared.len());
    for p in prepared {
        let (g, cross_err) = match p.csi {
            CsiMode::Accurate => (gram(&real.h), None),
            CsiMode::Estimated => {
                let bank = input.bank.expect("checked in run_drop");
                let est = bank.estimate(&real, &mut stream(cfg.seed, &[tag::PILOT, input.drop_index, t]))?;
                (gram(&est.hhat), Some(est.hhat.ad_mul(&est.error)))
            }
        };
        let k = g.nrows();
        let mut ct = CsiTrial::default();
        if cfg.schemes.contains(&Scheme::Conjugate) {
            ct.conj = (0..k).map(|i| g[(i, i)].norm_sqr()).collect();
        }
        if cfg.schemes.contains(&Scheme::Joint) {
            for nv in &p.effective_noise {
                ct.joint.push(log2_det_i_plus_scaled(&g, &vec![es / nv; k])?);
            }
            ct.psi = log2_det_hpd(&g).ok();
        }
        if cfg.schemes.contains(&Scheme::Mmse) {
            for (si, &n0) in n0s.iter().enumerate() {
                ct.mmse.push(mmse_trial(&g, cross_err.as_ref(), es, p.regularizer[si], n0)?);
            }
        }
        out.push(ct);
    }
    Ok(out)
}

fn conj_points(cfg: &EngineConfig, p: &Prepared, samples: &[&CsiTrial], n0s: &[f64]) -> Result<Vec<RatePoint>> {
    let m = p.moments.as_ref().expect("conjugate moments prepared");
    let k_users = m.second_gkk.len();
    let es = cfg.symbol_power;
    let powers = vec![es; k_users];
    let mut out = Vec::new();
    for (si, &n0) in n0s.iter().enumerate() {
        let denoms: Vec<f64> = (0..k_users).map(|k| conj_denominator(m, &powers, n0, k)).collect();
        let per_trial: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| (0..k_users).map(|k| (1.0 + s.conj[k] * es / denoms[k]).log2()).collect())
            .collect();
        let sums: Vec<f64> = per_trial.iter().map(|r| r.iter().sum()).collect();
        let (emp, se) = mean_se(&sums);
        let per_user = (0..k_users).map(|k| per_trial.iter().map(|r| r[k]).sum::<f64>() / samples.len() as f64).collect();
        let b = conj_rate_bounds(m, &powers, n0);
        out.push(RatePoint {
            snr_db: cfg.snr_db[si],
            empirical: emp,
            empirical_se: se,
            upper: b.iter().map(|x| x.upper).sum(),
            upper_se: 0.0,
            lower: b.iter().map(|x| x.lower).sum(),
            lower_se: 0.0,
            approx: None,
            singular: false,
            per_user,
        });
    }
    Ok(out)
}

fn joint_points(cfg: &EngineConfig, p: &Prepared, samples: &[&CsiTrial]) -> Result<Vec<RatePoint>> {
    let eg = p.expected_gram.as_ref().expect("expected Gram prepared");
    let k_users = eg.nrows();
    let es = cfg.symbol_power;
    let log_det_eg = log2_det_hpd(eg).ok();
    let psi: Option<Vec<f64>> = match log_det_eg {
        Some(ld) => samples.iter().map(|s| s.psi.map(|v| v - ld)).collect(),
        None => None,
    };
    let (psi_mean, psi_se) = psi.as_deref().map_or((0.0, 0.0), mean_se);
    let mut out = Vec::new();
    for (si, nv) in p.effective_noise.iter().enumerate() {
        let vals: Vec<f64> = samples.iter().map(|s| s.joint[si]).collect();
        let (emp, se) = mean_se(&vals);
        let jb = joint_bound(eg, &vec![es / nv; k_users])?;
        let singular = psi.is_none();
        let lower = if singular { 0.0 } else { jb.lower(psi_mean) };
        out.push(RatePoint {
            snr_db: cfg.snr_db[si],
            empirical: emp,
            empirical_se: se,
            upper: jb.upper,
            upper_se: 0.0,
            lower,
            lower_se: if lower > 0.0 { psi_se } else { 0.0 },
            approx: Some(jb.approx()),
            singular,
            per_user: vec![emp / k_users as f64; k_users],
        });
    }
    Ok(out)
}

fn mmse_points(cfg: &EngineConfig, samples: &[&CsiTrial], k_users: usize) -> Vec<RatePoint> {
    let es = cfg.symbol_power;
    let n = samples.len();
    let mut out = Vec::new();
    for si in 0..cfg.snr_db.len() {
        let stat = |keep: &dyn Fn(usize) -> bool| -> [f64; 3] {
            let mut tot = [0.0; 3];
            for k in 0..k_users {
                let (mut cnt, mut s1, mut s2, mut d) = (0.0, 0.0, 0.0, 0.0);
                for (t, s) in samples.iter().enumerate() {
                    if keep(t) {
                        let x = s.mmse[si].signal[k];
                        cnt += 1.0;
                        s1 += x;
                        s2 += x * x;
                        d += s.mmse[si].denom[k];
                    }
                }
                let (mean, dbar) = (s1 / cnt, d / cnt);
                let var = (s2 / cnt - mean * mean).max(0.0);
                let mut emp = 0.0;
                for (t, s) in samples.iter().enumerate() {
                    if keep(t) {
                        emp += (1.0 + s.mmse[si].signal[k] * es / dbar).log2();
                    }
                }
                let b = mmse_rate_bound(&MmseMoments { signal_second: mean, signal_var: var, denominator: dbar }, es);
                tot[0] += emp / cnt;
                tot[1] += b.upper;
                tot[2] += b.lower;
            }
            tot
        };
        let (full, se) = block_jackknife(n, stat);
        let per_user = (0..k_users)
            .map(|k| {
                let dbar = samples.iter().map(|s| s.mmse[si].denom[k]).sum::<f64>() / n as f64;
                samples.iter().map(|s| (1.0 + s.mmse[si].signal[k] * es / dbar).log2()).sum::<f64>() / n as f64
            })
            .collect();
        out.push(RatePoint {
            snr_db: cfg.snr_db[si],
            empirical: full[0],
            empirical_se: se[0],
            upper: full[1],
            upper_se: se[1],
            lower: full[2],
            lower_se: se[2],
            approx: None,
            singular: false,
            per_user,
        });
    }
    out
}

/// Averages per-drop results; standard errors combine as `√(Σ se²)/D`.
pub fn combine_drops(drops: &[DropRates]) -> Result<DropRates> {
    let first = drops.first().ok_or_else(|| Error::InvalidConfig("no drops to combine".into()))?;
    let d = drops.len() as f64;
    let mut out = first.clone();
    for (si, s) in out.series.iter_mut().enumerate() {
        for (pi, pt) in s.points.iter_mut().enumerate() {
            let all: Vec<&RatePoint> = drops.iter().map(|dr| &dr.series[si].points[pi]).collect();
            let avg = |f: &dyn Fn(&RatePoint) -> f64| all.iter().map(|p| f(p)).sum::<f64>() / d;
            let rss = |f: &dyn Fn(&RatePoint) -> f64| all.iter().map(|p| f(p).powi(2)).sum::<f64>().sqrt() / d;
            pt.empirical = avg(&|p| p.empirical);
            pt.empirical_se = rss(&|p| p.empirical_se);
            pt.upper = avg(&|p| p.upper);
            pt.upper_se = rss(&|p| p.upper_se);
            pt.lower = avg(&|p| p.lower);
            pt.lower_se = rss(&|p| p.lower_se);
            pt.approx = pt.approx.map(|_| avg(&|p| p.approx.unwrap_or(0.0)));
            pt.singular = all.iter().any(|p| p.singular);
            for k in 0..pt.per_user.len() {
                pt.per_user[k] = avg(&|p| p.per_user[k]);
            }
        }
    }
    Ok(out)
}

/// Instantaneous per-UE SINR samples in dB (capped at ±`SIR_CAP_DB`), one per
/// UE and trial, for unit `E_s`. `n0 = 0` gives the SIR. Estimation error of
/// the UE's own channel counts as interference. `regularizer` is the MMSE `ψ`.
pub fn sir_samples(
    input: &DropInput<'_>,
    scheme: Scheme,
    csi: CsiMode,
    trials: usize,
    seed: u64,
    los_redraw: LosRedraw,
    regularizer: f64,
    n0: f64,
) -> Result<Vec<f64>> {
    if scheme == Scheme::Joint {
        return Err(Error::InvalidConfig("joint detection has no per-stream SIR".into()));
    }
    let links = input.links;
    let rows: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let delta = match los_redraw {
                LosRedraw::PerDrop => input.delta.clone(),
                LosRedraw::PerTrial => draw_los_indicators(links, &mut stream(seed, &[tag::LOS, input.drop_index, t])),
            };
            let real = draw_channel(links, &input.los, &delta, &mut stream(seed, &[tag::FADING, input.drop_index, t]))?;
            let (known, err) = match csi {
                CsiMode::Accurate => (real.h.clone(), None),
                CsiMode::Estimated => {
                    let bank = input.bank.ok_or_else(|| Error::InvalidConfig("estimated CSI needs an estimator bank".into()))?;
                    let e = bank.estimate(&real, &mut stream(seed, &[tag::PILOT, input.drop_index, t]))?;
                    (e.hhat, Some(e.error))
                }
            };
            let g = gram(&known);
            let k = g.nrows();
            // combiner-side gain matrices F (on the known channel) and F̃ (on the error)
            let (f, ferr, vnorm) = match scheme {
                Scheme::Conjugate => {
                    let vn: Vec<f64> = (0..k).map(|i| g[(i, i)].re).collect();
                    (g.clone(), err.as_ref().map(|e| known.ad_mul(e)), vn)
                }
                _ => {
                    let a = &g + CMat::identity(k, k) * c(regularizer);
                    let w = cholesky(&a)?.inverse();
                    let f = &w * &g;
                    let wgw = &f * &w;
                    let vn = (0..k).map(|i| wgw[(i, i)].re).collect();
                    (f, err.as_ref().map(|e| &w * known.ad_mul(e)), vn)
                }
            };
            Ok((0..k)
                .map(|kk| {
                    let sig = f[(kk, kk)].norm_sqr();
                    let mut int = n0 * vnorm[kk];
                    for l in 0..k {
                        let mut v = if l == kk { crate::linalg::ZERO } else { f[(kk, l)] };
                        if let Some(fe) = &ferr {
                            if l == kk {
                                int += fe[(kk, l)].norm_sqr();
                            } else {
                                v += fe[(kk, l)];
                            }
                        }
                        int += v.norm_sqr();
                    }
                    (10.0 * (sig / int).log10()).clamp(-SIR_CAP_DB, SIR_CAP_DB)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::los_field;
    use crate::detection::{mmse_combine, CsiView};
    use crate::estimation::PilotPowerMode;
    use crate::geometry::{link_metrics, place_uniform, ArrayParams, BlockageEnvironment, PathlossParams, PlacementSpec};
    use crate::linalg::CVec;

    fn links(m: usize, k: usize, n: usize, seed: u64) -> LinkSet {
        let spec = PlacementSpec {
            n_aps: m,
            n_ues: k,
            area_side_km: 0.3,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            ap_gain: 1.0,
            ue_gain: 1.0,
            array: ArrayParams::half_wavelength(n, 2e9),
            env: BlockageEnvironment::default(),
        };
        link_metrics(&place_uniform(&spec, seed).unwrap(), &PathlossParams::default()).unwrap()
    }

    fn cfg(trials: usize) -> EngineConfig {
        EngineConfig {
            snr_db: vec![60.0, 80.0, 100.0],
            symbol_power: 1.0,
            trials,
            schemes: vec![Scheme::Conjugate, Scheme::Joint, Scheme::Mmse],
            csi: vec![CsiMode::Accurate, CsiMode::Estimated],
            los_redraw: LosRedraw::PerDrop,
            mmse_regularizer: None,
            seed: 9,
        }
    }

    fn run(c: &EngineConfig, ls: &LinkSet) -> DropRates {
        let bank = EstimatorBank::new(ls, PilotPowerMode::PerLinkSnr { snr: 100.0 }, 1.0).unwrap();
        let delta = draw_los_indicators(ls, &mut stream(c.seed, &[tag::LOS, 0]));
        let input = DropInput { links: ls, los: Arc::new(los_field(ls)), bank: Some(&bank), delta, drop_index: 0 };
        run_drop(c, &input).unwrap()
    }

    #[test]
    fn bounds_sandwich_and_ordering() {
        let ls = links(24, 4, 2, 3);
        let r = run(&cfg(300), &ls);
        for s in &r.series {
            for p in &s.points {
                let tol = 3.0 * (p.empirical_se.powi(2) + p.upper_se.powi(2)).sqrt() + 1e-9;
                assert!(p.empirical <= p.upper + tol, "{:?} {:?} {p:?}", s.scheme, s.csi);
            }
        }
        for (a, e) in [(CsiMode::Accurate, CsiMode::Estimated)].iter().map(|&(a, e)| (a, e)) {
            for sch in [Scheme::Conjugate, Scheme::Joint, Scheme::Mmse] {
                let pa = &r.get(sch, a).unwrap().points;
                let pe = &r.get(sch, e).unwrap().points;
                for (x, y) in pa.iter().zip(pe) {
                    assert!(x.empirical + 3.0 * x.empirical_se >= y.empirical - 3.0 * y.empirical_se);
                }
            }
        }
        let joint = &r.get(Scheme::Joint, CsiMode::Accurate).unwrap().points;
        let conj = &r.get(Scheme::Conjugate, CsiMode::Accurate).unwrap().points;
        for (j, c) in joint.iter().zip(conj) {
            assert!(j.empirical >= c.empirical);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let ls = links(8, 3, 1, 4);
        let c = cfg(40);
        let a = run(&c, &ls);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run(&c, &ls));
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn kxk_mmse_gains_match_explicit_combiner() {
        let ls = links(5, 3, 2, 6);
        let delta = LosIndicators::all(5, 3, true);
        let los = Arc::new(los_field(&ls));
        let real = draw_channel(&ls, &los, &delta, &mut stream(1, &[2])).unwrap();
        let (es, psi, n0) = (1.0, 3e-9, 2e-9);
        let t = mmse_trial(&gram(&real.h), None, es, psi, n0).unwrap();
        let y = CVec::zeros(real.h.nrows());
        let out = mmse_combine(CsiView::Accurate(&real.h), &y, &[es; 3], psi, n0).unwrap();
        for k in 0..3 {
            let sig = out.gains[(k, k)].norm_sqr();
            assert!((t.signal[k] - sig).abs() <= 1e-9 * sig);
            let mut d = n0 * out.combiner.column(k).norm_squared();
            for l in 0..3 {
                if l != k {
                    d += out.gains[(k, l)].norm_sqr() * es;
                }
            }
            assert!((t.denom[k] - d).abs() <= 1e-9 * d);
        }
    }

    #[test]
    fn jackknife_of_mean_matches_classic_se() {
        let mut rng = stream(3, &[1]);
        let x: Vec<f64> = (0..100).map(|_| crate::rng::complex_normal(&mut rng).re).collect();
        let (_, se) = mean_se(&x);
        let (m, jse) = block_jackknife(100, |keep| {
            let v: Vec<f64> = x.iter().enumerate().filter(|(t, _)| keep(*t)).map(|(_, v)| *v).collect();
            [v.iter().sum::<f64>() / v.len() as f64]
        });
        assert!((m[0] - x.iter().sum::<f64>() / 100.0).abs() < 1e-12);
        assert!((jse[0] / se - 1.0).abs() < 0.5);
    }

    #[test]
    fn combine_averages_drops() {
        let ls = links(6, 2, 1, 8);
        let mut c = cfg(10);
        c.schemes = vec![Scheme::Conjugate];
        c.csi = vec![CsiMode::Accurate];
        let a = run(&c, &ls);
        let both = combine_drops(&[a.clone(), a.clone()]).unwrap();
        let (p, q) = (&a.series[0].points[0], &both.series[0].points[0]);
        assert!((p.empirical - q.empirical).abs() < 1e-12);
        assert!((q.empirical_se - p.empirical_se / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_user_sir_hits_cap_and_sinr_is_snr_times_gain() {
        let ls = links(4, 1, 2, 5);
        let input = DropInput {
            links: &ls,
            los: Arc::new(los_field(&ls)),
            bank: None,
            delta: LosIndicators::all(4, 1, true),
            drop_index: 0,
        };
        let sir = sir_samples(&input, Scheme::Conjugate, CsiMode::Accurate, 5, 2, LosRedraw::PerDrop, 1e-9, 0.0).unwrap();
        assert!(sir.iter().all(|&v| v == SIR_CAP_DB));
        let n0 = 1e-6;
        let sinr = sir_samples(&input, Scheme::Conjugate, CsiMode::Accurate, 5, 2, LosRedraw::PerDrop, 1e-9, n0).unwrap();
        for (t, v) in sinr.iter().enumerate() {
            let real = draw_channel(&ls, &input.los, &input.delta, &mut stream(2, &[tag::FADING, 0, t as u64])).unwrap();
            let want = 10.0 * (real.h.norm_squared() / n0).log10();
            assert!((v - want).abs() < 1e-9);
        }
    }

    #[test]
    fn sir_samples_have_one_value_per_user_and_trial() {
        let ls = links(10, 3, 1, 5);
        let input = DropInput {
            links: &ls,
            los: Arc::new(los_field(&ls)),
            bank: None,
            delta: LosIndicators::all(10, 3, false),
            drop_index: 0,
        };
        let s = sir_samples(&input, Scheme::Conjugate, CsiMode::Accurate, 7, 1, LosRedraw::PerDrop, 1e-9, 0.0).unwrap();
        assert_eq!(s.len(), 21);
        assert!(s.iter().all(|v| v.abs() <= SIR_CAP_DB));
        assert!(sir_samples(&input, Scheme::Joint, CsiMode::Accurate, 7, 1, LosRedraw::PerDrop, 1e-9, 0.0).is_err());
    }
}
