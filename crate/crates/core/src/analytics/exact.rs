//! Exact moments of the conjugate-combining gains.
//!
//! Conditional on its LoS state, every per-link vector of interest (true
//! channel, LMMSE estimate, estimation error) is complex Gaussian:
//! `v = μ + B n` with `n ~ CN(0, I)`. Sums of independent per-AP quadratic
//! forms are handled through cumulants; the LoS state is mixed in through raw
//! moments. Passing 0/1 probabilities gives moments conditional on δ.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::los_channel;
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::geometry::LinkSet;
use crate::linalg::{c, identity, trace_re, CMat, CVec};

/// `μ + B n` with `n ~ CN(0, I)`.
#[derive(Debug, Clone)]
pub struct GaussianVec {
    pub mu: CVec,
    pub b: CMat,
    q: CMat,
}

impl GaussianVec {
    pub fn new(mu: CVec, b: CMat) -> Self {
        let q = &b * b.adjoint();
        Self { mu, b, q }
    }

    /// Covariance `B Bᴴ`.
    pub fn cov(&self) -> &CMat {
        &self.q
    }

    /// First four cumulants of `‖v‖²`:
    /// `κ_j = (j−1)!·(tr Q^j + j·μᴴ Q^{j−1} μ)`.
    pub fn norm_sq_cumulants(&self) -> [f64; 4] {
        let q = &self.q;
        let mut qp = identity(q.nrows());
        let mut out = [0.0; 4];
        let mut fact = 1.0;
        for (j, slot) in out.iter_mut().enumerate() {
            let jj = (j + 1) as f64;
            let mu_term = (self.mu.adjoint() * &qp * &self.mu)[(0, 0)].re;
            qp = &qp * q;
            *slot = fact * (trace_re(&qp) + jj * mu_term);
            fact *= jj;
        }
        out
    }
}

pub fn raw_from_cumulants(k: [f64; 4]) -> [f64; 4] {
    let [k1, k2, k3, k4] = k;
    [
        k1,
        k2 + k1 * k1,
        k3 + 3.0 * k2 * k1 + k1.powi(3),
        k4 + 4.0 * k3 * k1 + 3.0 * k2 * k2 + 6.0 * k2 * k1 * k1 + k1.powi(4),
    ]
}

pub fn cumulants_from_raw(m: [f64; 4]) -> [f64; 4] {
    let [m1, m2, m3, m4] = m;
    [
        m1,
        m2 - m1 * m1,
        m3 - 3.0 * m2 * m1 + 2.0 * m1.powi(3),
        m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1.powi(4),
    ]
}

/// Cumulants of a two-state mixture.
fn mix_cumulants(p: f64, on: [f64; 4], off: [f64; 4]) -> [f64; 4] {
    if p >= 1.0 {
        return on;
    }
    if p <= 0.0 {
        return off;
    }
    let (a, b) = (raw_from_cumulants(on), raw_from_cumulants(off));
    cumulants_from_raw([0, 1, 2, 3].map(|i| p * a[i] + (1.0 - p) * b[i]))
}

/// `(E X, E|X|²)` for `X = uᴴw` with `u`, `w` independent.
fn inner_moments_independent(u: &GaussianVec, w: &GaussianVec) -> (Complex64, f64) {
    let m = (u.mu.adjoint() * &w.mu)[(0, 0)];
    let t1 = (u.q.component_mul(&w.q.transpose())).sum().re; // tr(Q1 Q2)
    let t2 = (u.mu.adjoint() * &w.q * &u.mu)[(0, 0)].re;
    let t3 = (w.mu.adjoint() * &u.q * &w.mu)[(0, 0)].re;
    (m, m.norm_sqr() + t1 + t2 + t3)
}

/// `(E X, E|X|²)` for `X = uᴴw` with both driven by the same `n`.
fn inner_moments_shared(u: &GaussianVec, w: &GaussianVec) -> (Complex64, f64) {
    let mm = u.b.adjoint() * &w.b;
    let mean = (u.mu.adjoint() * &w.mu)[(0, 0)] + mm.trace();
    let p = w.b.adjoint() * &u.mu;
    let q = u.b.adjoint() * &w.mu;
    let fro: f64 = mm.iter().map(|z| z.norm_sqr()).sum();
    (mean, mean.norm_sqr() + fro + p.norm_squared() + q.norm_squared())
}

/// Receiver knowledge for the moment engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsiMode {
    Accurate,
    Estimated,
}

#[derive(Debug, Clone)]
struct LinkStates {
    /// True channel `h`.
    h: [GaussianVec; 2],
    /// Estimate `ĥ` and error `e = h − ĥ`, in a shared `(ḣ, w')` basis.
    est: Option<[(GaussianVec, GaussianVec); 2]>,
}

/// Per-link Gaussian descriptions for one drop.
#[derive(Debug, Clone)]
pub struct MomentModel {
    pub n_aps: usize,
    pub n_ues: usize,
    pub n_antennas: usize,
    links: Vec<LinkStates>,
}

impl MomentModel {
    pub fn new(links: &LinkSet, bank: Option<&EstimatorBank>) -> Result<Self> {
        let n = links.n_antennas();
        if let Some(b) = bank {
            if b.n_aps != links.n_aps || b.n_ues != links.n_ues || b.n_antennas != n {
                return Err(Error::InvalidConfig("estimator bank does not match links".into()));
            }
        }
        let mut out = Vec::with_capacity(links.links.len());
        for m in 0..links.n_aps {
            for k in 0..links.n_ues {
                let l = links.get(m, k);
                let hbar = los_channel(l, &links.array);
                let sb = l.beta.sqrt();
                let state = |on: bool| -> GaussianVec {
                    let mu = if on { hbar.clone() } else { CVec::zeros(n) };
                    GaussianVec::new(mu, identity(n) * c(sb))
                };
                let h = [state(false), state(true)];
                let est = bank.map(|bank| {
                    [false, true].map(|on| {
                        let le = bank.link(m, k, on);
                        let a = &le.filter;
                        let (sep, sn0) = (le.pilot_power.sqrt(), le.noise_power.sqrt());
                        let mu_h = if on { hbar.clone() } else { CVec::zeros(n) };
                        let mu_hat = a * &mu_h * c(sep);
                        let mut b_hat = CMat::zeros(n, 2 * n);
                        b_hat.view_mut((0, 0), (n, n)).copy_from(&(a * c(sep * sb)));
                        b_hat.view_mut((0, n), (n, n)).copy_from(&(a * c(sn0)));
                        let mut b_h = CMat::zeros(n, 2 * n);
                        b_h.view_mut((0, 0), (n, n)).copy_from(&(identity(n) * c(sb)));
                        let b_err = b_h - &b_hat;
                        let mu_err = &mu_h - &mu_hat;
                        (GaussianVec::new(mu_hat, b_hat), GaussianVec::new(mu_err, b_err))
                    })
                });
                out.push(LinkStates { h, est });
            }
        }
        Ok(Self { n_aps: links.n_aps, n_ues: links.n_ues, n_antennas: n, links: out })
    }

    fn at(&self, m: usize, k: usize) -> &LinkStates {
        &self.links[m * self.n_ues + k]
    }

    fn signal(&self, m: usize, k: usize, on: bool, csi: CsiMode) -> Result<&GaussianVec> {
        let s = self.at(m, k);
        match csi {
            CsiMode::Accurate => Ok(&s.h[on as usize]),
            CsiMode::Estimated => s
                .est
                .as_ref()
                .map(|e| &e[on as usize].0)
                .ok_or_else(|| Error::InvalidConfig("estimated-CSI moments need an estimator bank".into())),
        }
    }

    fn check_probs(&self, probs: &[f64]) -> Result<()> {
        if probs.len() != self.n_aps * self.n_ues {
            return Err(Error::InvalidConfig(format!("{} LoS probabilities for {} links", probs.len(), self.n_aps * self.n_ues)));
        }
        Ok(())
    }

    /// Cumulants of `Σ_m ‖v_mk‖²`, `v = h` or `ĥ`.
    pub fn gain_cumulants(&self, k: usize, probs: &[f64], csi: CsiMode) -> Result<[f64; 4]> {
        self.check_probs(probs)?;
        let mut total = [0.0; 4];
        for m in 0..self.n_aps {
            let p = probs[m * self.n_ues + k];
            let on = self.signal(m, k, true, csi)?.norm_sq_cumulants();
            let off = self.signal(m, k, false, csi)?.norm_sq_cumulants();
            let mixed = mix_cumulants(p, on, off);
            for i in 0..4 {
                total[i] += mixed[i];
            }
        }
        Ok(total)
    }

    /// Moments of `g_kl = Σ_m v_mkᴴ h_ml` (`v = h` or `ĥ`), `k ≠ l`.
    pub fn cross_moments(&self, k: usize, l: usize, probs: &[f64], csi: CsiMode) -> Result<(Complex64, f64)> {
        self.check_probs(probs)?;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut var = 0.0;
        for m in 0..self.n_aps {
            let (pk, pl) = (probs[m * self.n_ues + k], probs[m * self.n_ues + l]);
            let (mut em, mut e2) = (Complex64::new(0.0, 0.0), 0.0);
            for dk in [false, true] {
                for dl in [false, true] {
                    let w = (if dk { pk } else { 1.0 - pk }) * (if dl { pl } else { 1.0 - pl });
                    if w == 0.0 {
                        continue;
                    }
                    let (x, x2) = inner_moments_independent(self.signal(m, k, dk, csi)?, &self.at(m, l).h[dl as usize]);
                    em += x * w;
                    e2 += x2 * w;
                }
            }
            mean += em;
            var += e2 - em.norm_sqr();
        }
        Ok((mean, var + mean.norm_sqr()))
    }

    /// `E[v_kᴴ v_l]` where `v = h` or `ĥ`, i.e. entries of `E[G]` or `E[Ĝ]`.
    pub fn expected_gram(&self, probs: &[f64], csi: CsiMode) -> Result<CMat> {
        self.check_probs(probs)?;
        let kk = self.n_ues;
        let mut g = CMat::zeros(kk, kk);
        for k in 0..kk {
            g[(k, k)] = c(self.gain_cumulants(k, probs, csi)?[0]);
            for l in (k + 1)..kk {
                let mut s = Complex64::new(0.0, 0.0);
                for m in 0..self.n_aps {
                    let (pk, pl) = (probs[m * kk + k], probs[m * kk + l]);
                    if pk * pl == 0.0 {
                        continue;
                    }
                    let (u, w) = (self.signal(m, k, true, csi)?, self.signal(m, l, true, csi)?);
                    s += (u.mu.adjoint() * &w.mu)[(0, 0)] * (pk * pl);
                }
                g[(k, l)] = s;
                g[(l, k)] = s.conj();
            }
        }
        Ok(g)
    }

    /// `(E g̃_kk, E|g̃_kk|²)` for `g̃_kk = Σ_m ĥ_mkᴴ e_mk`.
    pub fn error_gain_moments(&self, k: usize, probs: &[f64]) -> Result<(Complex64, f64)> {
        self.check_probs(probs)?;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut var = 0.0;
        for m in 0..self.n_aps {
            let p = probs[m * self.n_ues + k];
            let est = self
                .at(m, k)
                .est
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("error-gain moments need an estimator bank".into()))?;
            let (mut em, mut e2) = (Complex64::new(0.0, 0.0), 0.0);
            for on in [false, true] {
                let w = if on { p } else { 1.0 - p };
                if w == 0.0 {
                    continue;
                }
                let (u, e) = &est[on as usize];
                let (x, x2) = inner_moments_shared(u, e);
                em += x * w;
                e2 += x2 * w;
            }
            mean += em;
            var += e2 - em.norm_sqr();
        }
        Ok((mean, var + mean.norm_sqr()))
    }

    /// `Σ_m E[tr C̄_mk]`.
    pub fn error_trace(&self, k: usize, probs: &[f64]) -> Result<f64> {
        self.check_probs(probs)?;
        let mut t = 0.0;
        for m in 0..self.n_aps {
            let p = probs[m * self.n_ues + k];
            let est = self.at(m, k).est.as_ref().ok_or_else(|| Error::InvalidConfig("need an estimator bank".into()))?;
            t += p * trace_re(est[1].1.cov()) + (1.0 - p) * trace_re(est[0].1.cov());
            // the error mean vanishes only on average over the pilot noise, not per state
            t += p * est[1].1.mu.norm_squared() + (1.0 - p) * est[0].1.mu.norm_squared();
        }
        Ok(t)
    }
}

/// Moments of the conjugate-combining gains of every UE.
#[derive(Debug, Clone)]
pub struct ConjMoments {
    pub csi: CsiMode,
    /// `E[g_kk]` (or `E[ĝ_kk]`).
    pub mean_gkk: Vec<f64>,
    pub second_gkk: Vec<f64>,
    pub fourth_gkk: Vec<f64>,
    /// `var(|g_kk|²) = E|g_kk|⁴ − (E|g_kk|²)²`.
    pub var_abs_sq: Vec<f64>,
    pub mean_gkl: CMat,
    /// `E|g_kl|²` (zero on the diagonal).
    pub second_gkl: Vec<Vec<f64>>,
    /// `E|g̃_kk|²`; zero under accurate CSI.
    pub second_gtilde: Vec<f64>,
    /// `var(z_k)/N0`.
    pub noise_gain: Vec<f64>,
}

impl ConjMoments {
    pub fn compute(model: &MomentModel, probs: &[f64], csi: CsiMode) -> Result<Self> {
        let kk = model.n_ues;
        let mut out = Self {
            csi,
            mean_gkk: vec![0.0; kk],
            second_gkk: vec![0.0; kk],
            fourth_gkk: vec![0.0; kk],
            var_abs_sq: vec![0.0; kk],
            mean_gkl: CMat::zeros(kk, kk),
            second_gkl: vec![vec![0.0; kk]; kk],
            second_gtilde: vec![0.0; kk],
            noise_gain: vec![0.0; kk],
        };
        for k in 0..kk {
            let cum = model.gain_cumulants(k, probs, csi)?;
            let raw = raw_from_cumulants(cum);
            let [k1, k2, k3, k4] = cum;
            out.mean_gkk[k] = raw[0];
            out.second_gkk[k] = raw[1];
            out.fourth_gkk[k] = raw[3];
            out.var_abs_sq[k] = k4 + 4.0 * k3 * k1 + 2.0 * k2 * k2 + 4.0 * k2 * k1 * k1;
            out.mean_gkl[(k, k)] = c(raw[0]);
            out.noise_gain[k] = raw[0];
            for l in 0..kk {
                if l != k {
                    let (m, s) = model.cross_moments(k, l, probs, csi)?;
                    out.mean_gkl[(k, l)] = m;
                    out.second_gkl[k][l] = s;
                }
            }
            if csi == CsiMode::Estimated {
                out.second_gtilde[k] = model.error_gain_moments(k, probs)?.1;
            }
        }
        Ok(out)
    }

    pub fn var_gkk(&self, k: usize) -> f64 {
        self.second_gkk[k] - self.mean_gkk[k].powi(2)
    }

    /// `E|g_kl − E g_kl|²`.
    pub fn var_gkl(&self, k: usize, l: usize) -> f64 {
        self.second_gkl[k][l] - self.mean_gkl[(k, l)].norm_sqr()
    }
}

/// Closed-form `var(g_kl)` under accurate CSI:
/// `Σ_m P_kP_l(1−P_kP_l)|c_m|² + Nβ_kβ_l + N P_mk β_ml a_mk + N P_ml β_mk a_ml`,
/// with `c_m = h̄_mkᴴ h̄_ml` and `a` the LoS power per antenna.
pub fn var_gkl_closed_form(links: &LinkSet, probs: &[f64], k: usize, l: usize) -> f64 {
    let n = links.n_antennas() as f64;
    let kk = links.n_ues;
    (0..links.n_aps)
        .map(|m| {
            let (lk, ll) = (links.get(m, k), links.get(m, l));
            let (pk, pl) = (probs[m * kk + k], probs[m * kk + l]);
            let cm = (los_channel(lk, &links.array).adjoint() * los_channel(ll, &links.array))[(0, 0)];
            pk * pl * (1.0 - pk * pl) * cm.norm_sqr()
                + n * lk.beta * ll.beta
                + n * pk * ll.beta * lk.los_power()
                + n * pl * lk.beta * ll.los_power()
        })
        .sum()
}

/// Estimation-error power per receive antenna, `Σ_k E_s,k Σ_m tr C̄_mk / (MN)`.
pub fn error_power_per_antenna(model: &MomentModel, probs: &[f64], symbol_powers: &[f64]) -> Result<f64> {
    let mut t = 0.0;
    for (k, es) in symbol_powers.iter().enumerate() {
        t += es * model.error_trace(k, probs)?;
    }
    Ok(t / (model.n_aps * model.n_antennas) as f64)
}
