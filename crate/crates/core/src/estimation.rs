//! Orthogonal-pilot training and per-link LMMSE channel estimation.
//!
//! The estimator is genie-aided: it knows the LoS indicator δ_mk of each link
//! and uses the matching second-moment matrix
//! `Σ_hh = δ·h̄h̄ᴴ + β·I`. Estimates satisfy `h = ĥ + e` with
//! `E[ĥĥᴴ] = C`, `E[eeᴴ] = C̄` and `E[ĥeᴴ] = 0`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{los_channel, ChannelRealization, LosIndicators};
use crate::error::{Error, Result};
use crate::geometry::{ArrayParams, LinkMetrics, LinkSet};
use crate::linalg::{c, frobenius, hermitian_defect, identity, solve_hpd, trace_re, CMat, CVec};
use crate::rng::complex_normal;

const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub pilot_power: f64,
    pub noise_power: f64,
    pub n_pilots: usize,
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pilot_power > 0.0 && self.pilot_power.is_finite()) {
            return Err(Error::InvalidConfig(format!("pilot power must be positive, got {}", self.pilot_power)));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise power must be positive, got {}", self.noise_power)));
        }
        if self.n_pilots == 0 {
            return Err(Error::InvalidConfig("need at least one pilot".into()));
        }
        Ok(())
    }
}

/// How the pilot energy of each link is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PilotPowerMode {
    /// Same `E_p` on every link.
    Global { pilot_power: f64 },
    /// Per-link `E_p` with `E_p·tr(Σ_hh)/(N·N0) = snr`.
    PerLinkSnr { snr: f64 },
}

impl PilotPowerMode {
    fn pilot_power(&self, sigma_hh_trace: f64, n: usize, n0: f64) -> f64 {
        match *self {
            PilotPowerMode::Global { pilot_power } => pilot_power,
            PilotPowerMode::PerLinkSnr { snr } => snr * n as f64 * n0 / sigma_hh_trace,
        }
    }
}

/// K orthonormal pilots of length K, one per row.
pub fn orthonormal_pilots(k: usize) -> CMat {
    identity(k)
}

pub fn check_orthonormal(pilots: &CMat) -> Result<()> {
    let gram = pilots * pilots.adjoint();
    let defect = frobenius(&(gram - identity(pilots.nrows())));
    if defect > ORTHONORMAL_TOL || pilots.ncols() < pilots.nrows() {
        return Err(Error::InvalidConfig(format!("pilots are not orthonormal (Gram defect {defect:.3e})")));
    }
    Ok(())
}

/// Received pilot block `Y = √E_p·H·Ψ + √N0·W` (MN × pilot length); rows
/// `mN..(m+1)N` are AP m's observations.
pub fn pilot_receive<R: Rng + ?Sized>(h: &CMat, pilots: &CMat, ep: f64, n0: f64, rng: &mut R) -> Result<CMat> {
    check_orthonormal(pilots)?;
    if pilots.nrows() != h.ncols() {
        return Err(Error::InvalidConfig(format!("{} pilots for {} users", pilots.nrows(), h.ncols())));
    }
    let mut y = h * pilots * c(ep.sqrt());
    let s = n0.sqrt();
    // column-major fill keeps the draw order independent of nalgebra internals
    for col in 0..y.ncols() {
        for row in 0..y.nrows() {
            y[(row, col)] += complex_normal(rng) * s;
        }
    }
    Ok(y)
}

/// `y'_k = Σ_n y[n]·ψ_k*[n]`.
pub fn despread(y: &CMat, pilots: &CMat, k: usize) -> CVec {
    y * pilots.row(k).adjoint()
}

#[derive(Debug, Clone)]
pub struct LinkCovariances {
    pub sigma_hh: CMat,
    pub sigma_yy: CMat,
    pub sigma_hy: CMat,
}

pub fn link_covariances(link: &LinkMetrics, array: &ArrayParams, delta: bool, ep: f64, n0: f64) -> LinkCovariances {
    let n = array.n_antennas;
    let mut sigma_hh = identity(n) * c(link.beta);
    if delta {
        let hb = los_channel(link, array);
        sigma_hh += &hb * hb.adjoint();
    }
    let sigma_yy = &sigma_hh * c(ep) + identity(n) * c(n0);
    let sigma_hy = &sigma_hh * c(ep.sqrt());
    LinkCovariances { sigma_hh, sigma_yy, sigma_hy }
}

/// LMMSE filter and covariances of one link in one LoS state.
#[derive(Debug, Clone)]
pub struct LinkEstimator {
    pub pilot_power: f64,
    pub noise_power: f64,
    pub beta: f64,
    /// LoS channel h̄ (zero when δ = 0).
    pub mean: CVec,
    pub sigma_hh: CMat,
    /// `√E_p·Σ_hh·Σ_yy⁻¹`, so that `ĥ = A·y'`.
    pub filter: CMat,
    pub c: CMat,
    pub cbar: CMat,
}

impl LinkEstimator {
    pub fn new(link: &LinkMetrics, array: &ArrayParams, delta: bool, ep: f64, n0: f64) -> Result<Self> {
        let cov = link_covariances(link, array, delta, ep, n0);
        // Σ_yy⁻¹ Σ_hh = (Σ_hh Σ_yy⁻¹)ᴴ since both are Hermitian
        let yinv_hh = solve_hpd(&cov.sigma_yy, &cov.sigma_hh)?;
        let filter = yinv_hh.adjoint() * c(ep.sqrt());
        let mut cm = &cov.sigma_hh * &yinv_hh * c(ep);
        cm = (&cm + cm.adjoint()) * c(0.5);
        let cbar = &cov.sigma_hh - &cm;
        let mean = if delta { los_channel(link, array) } else { CVec::zeros(array.n_antennas) };
        Ok(Self { pilot_power: ep, noise_power: n0, beta: link.beta, mean, sigma_hh: cov.sigma_hh, filter, c: cm, cbar })
    }

    pub fn estimate(&self, y_despread: &CVec) -> CVec {
        &self.filter * y_despread
    }

    pub fn mse(&self) -> f64 {
        trace_re(&self.cbar)
    }
}

/// Estimators for every link and both LoS states.
#[derive(Debug, Clone)]
pub struct EstimatorBank {
    pub n_aps: usize,
    pub n_ues: usize,
    pub n_antennas: usize,
    pub noise_power: f64,
    pub mode: PilotPowerMode,
    // index: 2·(m·K + k) + δ
    links: Vec<LinkEstimator>,
}

impl EstimatorBank {
    pub fn new(links: &LinkSet, mode: PilotPowerMode, n0: f64) -> Result<Self> {
        if !(n0 > 0.0) {
            return Err(Error::InvalidConfig(format!("pilot noise power must be positive, got {n0}")));
        }
        let n = links.n_antennas();
        let mut out = Vec::with_capacity(2 * links.links.len());
        for l in &links.links {
            for delta in [false, true] {
                let tr = link_covariances(l, &links.array, delta, 1.0, n0).sigma_hh.trace().re;
                let ep = mode.pilot_power(tr, n, n0);
                if !(ep > 0.0 && ep.is_finite()) {
                    return Err(Error::InvalidConfig(format!("pilot power {ep} is not positive and finite")));
                }
                out.push(LinkEstimator::new(l, &links.array, delta, ep, n0)?);
            }
        }
        Ok(Self { n_aps: links.n_aps, n_ues: links.n_ues, n_antennas: n, noise_power: n0, mode, links: out })
    }

    #[inline]
    pub fn link(&self, m: usize, k: usize, delta: bool) -> &LinkEstimator {
        &self.links[2 * (m * self.n_ues + k) + delta as usize]
    }

    /// `Σ_m tr(C̄_mk)` for UE k under the given LoS indicators.
    pub fn error_trace(&self, k: usize, delta: &LosIndicators) -> f64 {
        (0..self.n_aps).map(|m| self.link(m, k, delta.get(m, k)).mse()).sum()
    }

    /// Draws estimates for one channel realization.
    ///
    /// With a global pilot power the pilots go through [`pilot_receive`] and
    /// [`despread`]; per-link pilot powers are not a physical transmission, so
    /// each despread observation `√E_p,mk·h_mk + √N0·w` is drawn directly.
    pub fn estimate<R: Rng + ?Sized>(&self, real: &ChannelRealization, rng: &mut R) -> Result<ChannelEstimate> {
        let n = self.n_antennas;
        let (rows, k_users) = (self.n_aps * n, self.n_ues);
        if real.h.nrows() != rows || real.h.ncols() != k_users {
            return Err(Error::InvalidConfig("realization shape does not match estimator bank".into()));
        }
        let mut hhat = CMat::zeros(rows, k_users);
        match self.mode {
            PilotPowerMode::Global { pilot_power } => {
                let pilots = orthonormal_pilots(k_users);
                let y = pilot_receive(&real.h, &pilots, pilot_power, self.noise_power, rng)?;
                for k in 0..k_users {
                    let yk = despread(&y, &pilots, k);
                    for m in 0..self.n_aps {
                        let est = self.link(m, k, real.delta.get(m, k));
                        let block: CVec = yk.rows(m * n, n).into_owned();
                        hhat.view_mut((m * n, k), (n, 1)).copy_from(&est.estimate(&block));
                    }
                }
            }
            PilotPowerMode::PerLinkSnr { .. } => {
                let s0 = self.noise_power.sqrt();
                for k in 0..k_users {
                    for m in 0..self.n_aps {
                        let est = self.link(m, k, real.delta.get(m, k));
                        let sp = est.pilot_power.sqrt();
                        let y = CVec::from_fn(n, |i, _| real.h[(m * n + i, k)] * sp + complex_normal(rng) * s0);
                        hhat.view_mut((m * n, k), (n, 1)).copy_from(&est.estimate(&y));
                    }
                }
            }
        }
        let error = &real.h - &hhat;
        Ok(ChannelEstimate { hhat, error })
    }
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Stacked estimate Ĥ (MN×K).
    pub hhat: CMat,
    /// Estimation error `H − Ĥ`.
    pub error: CMat,
}

/// Hermitian PSD square root by eigendecomposition; eigenvalues down to
/// `−1e−10·max(1, λ_max)` are clipped to zero.
pub fn psd_sqrt(a: &CMat) -> Result<CMat> {
    if hermitian_defect(a) > 1e-10 {
        return Err(Error::ContractViolation("psd_sqrt needs a Hermitian matrix".into()));
    }
    let n = a.nrows();
    let eig = ((a + a.adjoint()) * c(0.5)).symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut roots = Vec::with_capacity(n);
    for &v in eig.eigenvalues.iter() {
        if v < -1e-10 * scale {
            return Err(Error::ContractViolation(format!("psd_sqrt input has eigenvalue {v:.3e}")));
        }
        roots.push(v.max(0.0).sqrt());
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    let b = scaled * u.adjoint();
    Ok((&b + b.adjoint()) * c(0.5))
}

/// Running sample moments of the error `e = h − ĥ` of one link.
#[derive(Debug, Clone)]
pub struct ErrorDiagnostics {
    pub draws: usize,
    sum_ee: CMat,
    sum_he: CMat,
    sum_hh: CMat,
}

impl ErrorDiagnostics {
    pub fn new(n: usize) -> Self {
        Self { draws: 0, sum_ee: CMat::zeros(n, n), sum_he: CMat::zeros(n, n), sum_hh: CMat::zeros(n, n) }
    }

    pub fn push(&mut self, h: &CVec, hhat: &CVec) {
        let e = h - hhat;
        self.sum_ee += &e * e.adjoint();
        self.sum_he += hhat * e.adjoint();
        self.sum_hh += hhat * hhat.adjoint();
        self.draws += 1;
    }

    fn mean(&self, s: &CMat) -> CMat {
        s / Complex64::new(self.draws.max(1) as f64, 0.0)
    }

    /// Empirical `E[eeᴴ]`.
    pub fn error_moment(&self) -> CMat {
        self.mean(&self.sum_ee)
    }

    /// Empirical `E[ĥeᴴ]`.
    pub fn cross_moment(&self) -> CMat {
        self.mean(&self.sum_he)
    }

    /// Empirical `E[ĥĥᴴ]`.
    pub fn estimate_moment(&self) -> CMat {
        self.mean(&self.sum_hh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_channel, los_field};
    use crate::geometry::{link_metrics, place_uniform, BlockageEnvironment, PathlossParams, PlacementSpec};
    use crate::rng::{stream, tag};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn link(n: usize) -> (LinkMetrics, ArrayParams) {
        let array = ArrayParams::half_wavelength(n, 2e9);
        let l = LinkMetrics { d_km: 0.03, x_m: 30.0, theta: 0.4, beta: 2e-5, p_los: 0.5, los_amplitude: 4e-3 };
        (l, array)
    }

    fn linkset(m: usize, k: usize, n: usize, seed: u64) -> LinkSet {
        let spec = PlacementSpec {
            n_aps: m,
            n_ues: k,
            area_side_km: 0.1,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            ap_gain: 1.0,
            ue_gain: 1.0,
            array: ArrayParams::half_wavelength(n, 2e9),
            env: BlockageEnvironment::default(),
        };
        link_metrics(&place_uniform(&spec, seed).unwrap(), &PathlossParams::default()).unwrap()
    }

    #[test]
    fn pilot_config_validation() {
        assert!(PilotConfig { pilot_power: 1.0, noise_power: 1.0, n_pilots: 2 }.validate().is_ok());
        assert!(PilotConfig { pilot_power: 0.0, noise_power: 1.0, n_pilots: 2 }.validate().is_err());
        assert!(PilotConfig { pilot_power: 1.0, noise_power: -1.0, n_pilots: 2 }.validate().is_err());
    }

    #[test]
    fn non_orthonormal_pilots_are_rejected() {
        let mut p = orthonormal_pilots(3);
        p[(0, 1)] = c(0.3);
        let h = CMat::zeros(2, 3);
        let err = pilot_receive(&h, &p, 1.0, 1.0, &mut stream(0, &[0])).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn noiseless_single_user_pilot() {
        let h = CMat::from_fn(4, 1, |r, _| Complex64::new(r as f64, 1.0));
        let y = pilot_receive(&h, &orthonormal_pilots(1), 4.0, 0.0, &mut stream(0, &[0])).unwrap();
        assert_eq!(y, &h * c(2.0));
    }

    #[test]
    fn despread_is_exact_inverse_without_noise() {
        let h = CMat::from_fn(6, 3, |r, k| Complex64::new(r as f64 - k as f64, 0.1 * k as f64));
        let p = orthonormal_pilots(3);
        let y = pilot_receive(&h, &p, 9.0, 0.0, &mut stream(0, &[0])).unwrap();
        for k in 0..3 {
            let yk = despread(&y, &p, k);
            assert!((yk - h.column(k) * c(3.0)).norm() < 1e-14);
        }
        // a single active user leaks nothing into other despread outputs
        let mut h1 = CMat::zeros(6, 3);
        h1.set_column(1, &h.column(1));
        let y1 = pilot_receive(&h1, &p, 1.0, 0.0, &mut stream(0, &[0])).unwrap();
        assert!(despread(&y1, &p, 0).norm() < 1e-15);
        assert!(despread(&y1, &p, 2).norm() < 1e-15);
    }

    #[test]
    fn zero_channel_pilot_noise_power() {
        let h = CMat::zeros(2, 2);
        let p = orthonormal_pilots(2);
        let n0 = 0.7;
        let mut rng = stream(1, &[tag::PILOT]);
        let draws = 25_000;
        let mut acc = 0.0;
        let mut white = CMat::zeros(2, 2);
        for _ in 0..draws {
            let y = pilot_receive(&h, &p, 1.0, n0, &mut rng).unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let w = despread(&y, &p, 1) / c(n0.sqrt());
            white += &w * w.adjoint();
        }
        let per_entry = acc / (draws * 4) as f64;
        assert!((per_entry / n0 - 1.0).abs() < 0.02, "{per_entry}");
        let cov = white / c(draws as f64);
        assert!(frobenius(&(cov - identity(2))) < 0.04);
    }

    #[test]
    fn pilot_energy_matches_closed_form() {
        let ls = linkset(2, 3, 2, 3);
        let los = Arc::new(los_field(&ls));
        let delta = LosIndicators::all(2, 3, true);
        let p = orthonormal_pilots(3);
        let (ep, n0) = (5e3, 1e-4);
        let mut rng = stream(2, &[tag::PILOT]);
        // E‖y_m[n]‖² for AP 0 and slot 1 (only user 1 transmits there)
        let expected = ep * (2.0 * ls.get(0, 1).los_power() + 2.0 * ls.get(0, 1).beta) + n0 * 2.0;
        let draws = 40_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let real = draw_channel(&ls, &los, &delta, &mut rng).unwrap();
            let y = pilot_receive(&real.h, &p, ep, n0, &mut rng).unwrap();
            acc += y.view((0, 1), (2, 1)).norm_squared();
        }
        let mean = acc / draws as f64;
        assert!((mean / expected - 1.0).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn covariance_examples() {
        let (l, array) = link(3);
        let cov0 = link_covariances(&l, &array, false, 2.0, 0.5);
        assert_eq!(cov0.sigma_hh, identity(3) * c(l.beta));
        let cov1 = link_covariances(&l, &array, true, 2.0, 0.5);
        let tr = cov1.sigma_hh.trace().re;
        assert!((tr - (3.0 * l.los_amplitude.powi(2) + 3.0 * l.beta)).abs() < 1e-18);
        assert!(frobenius(&(&cov1.sigma_yy - identity(3) * c(0.5) - &cov1.sigma_hh * c(2.0))) < 1e-15);
        assert_eq!(cov1.sigma_hy, &cov1.sigma_hh * c(2f64.sqrt()));
    }

    #[test]
    fn scalar_nlos_estimator_is_textbook() {
        let (l, array) = link(1);
        let (ep, n0) = (3.0e4, 0.2);
        let est = LinkEstimator::new(&l, &array, false, ep, n0).unwrap();
        let y = CVec::from_vec(vec![Complex64::new(0.3, -0.2)]);
        let want = y[0] * (l.beta * ep / (l.beta * ep + n0)) / ep.sqrt();
        assert!((est.estimate(&y)[0] - want).norm() < 1e-15);
        let c_want = l.beta * l.beta * ep / (l.beta * ep + n0);
        assert!((est.c[(0, 0)].re - c_want).abs() < 1e-18);
    }

    #[test]
    fn covariance_split_and_ordering() {
        for delta in [false, true] {
            let (l, array) = link(4);
            let est = LinkEstimator::new(&l, &array, delta, 1e4, 1e-2).unwrap();
            assert!(frobenius(&(&est.c + &est.cbar - &est.sigma_hh)) <= 1e-12 * frobenius(&est.sigma_hh));
            let scale = frobenius(&est.sigma_hh);
            for ev in crate::linalg::hermitian_eigenvalues(&est.cbar) {
                assert!(ev >= -1e-12 * scale);
            }
            for ev in crate::linalg::hermitian_eigenvalues(&est.c) {
                assert!(ev >= -1e-12 * scale);
            }
        }
    }

    proptest! {
        #[test]
        fn mse_non_increasing_in_pilot_power(e1 in 1.0f64..1e6, factor in 1.0f64..100.0, delta: bool) {
            let (l, array) = link(3);
            let a = LinkEstimator::new(&l, &array, delta, e1, 1e-3).unwrap();
            let b = LinkEstimator::new(&l, &array, delta, e1 * factor, 1e-3).unwrap();
            prop_assert!(b.mse() <= a.mse() * (1.0 + 1e-9));
        }

        #[test]
        fn psd_sqrt_reconstructs(entries in proptest::collection::vec(-1.0f64..1.0, 18)) {
            let b = CMat::from_fn(3, 3, |i, j| Complex64::new(entries[i * 3 + j], entries[9 + i * 3 + j]));
            let a = &b * b.adjoint();
            let r = psd_sqrt(&a).unwrap();
            prop_assert!(hermitian_defect(&r) < 1e-12);
            prop_assert!(frobenius(&(&r * &r - &a)) <= 1e-10 * frobenius(&a).max(1e-300));
        }
    }

    #[test]
    fn psd_sqrt_examples_and_errors() {
        assert!(frobenius(&(psd_sqrt(&identity(3)).unwrap() - identity(3))) < 1e-15);
        let d = CMat::from_diagonal(&CVec::from_vec(vec![c(4.0), c(9.0)]));
        let r = psd_sqrt(&d).unwrap();
        assert!((r[(0, 0)].re - 2.0).abs() < 1e-14 && (r[(1, 1)].re - 3.0).abs() < 1e-14);
        let mut bad = identity(2);
        bad[(0, 1)] = c(1.0);
        assert!(matches!(psd_sqrt(&bad), Err(Error::ContractViolation(_))));
        assert!(matches!(psd_sqrt(&(identity(2) * c(-1.0))), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn high_pilot_snr_recovers_channel() {
        let ls = linkset(3, 2, 2, 11);
        let los = Arc::new(los_field(&ls));
        let mut rng = stream(5, &[tag::FADING]);
        let delta = crate::channel::draw_los_indicators(&ls, &mut rng);
        let real = draw_channel(&ls, &los, &delta, &mut rng).unwrap();
        // pilot SNR 120 dB relative to the weakest link
        let n0 = 1.0;
        let min_beta = ls.links.iter().map(|l| l.beta).fold(f64::INFINITY, f64::min);
        let bank = EstimatorBank::new(&ls, PilotPowerMode::Global { pilot_power: 1e12 / min_beta }, n0).unwrap();
        let est = bank.estimate(&real, &mut rng).unwrap();
        assert!(frobenius(&est.error) / frobenius(&real.h) < 1e-4);
        let bank0 = EstimatorBank::new(&ls, PilotPowerMode::Global { pilot_power: 1.0 }, 1e-300).unwrap();
        let est0 = bank0.estimate(&real, &mut rng).unwrap();
        assert!(frobenius(&est0.error) / frobenius(&real.h) < 1e-9);
    }

    #[test]
    fn per_link_snr_mode_hits_target() {
        let ls = linkset(2, 2, 3, 7);
        let bank = EstimatorBank::new(&ls, PilotPowerMode::PerLinkSnr { snr: 100.0 }, 0.01).unwrap();
        for m in 0..2 {
            for k in 0..2 {
                for d in [false, true] {
                    let e = bank.link(m, k, d);
                    let snr = e.pilot_power * e.sigma_hh.trace().re / (3.0 * 0.01);
                    assert!((snr - 100.0).abs() < 1e-9);
                }
            }
        }
    }

    fn monte_carlo_link(mode: PilotPowerMode, delta_on: bool) {
        let ls = linkset(1, 1, 3, 13);
        let los = Arc::new(los_field(&ls));
        let delta = LosIndicators::all(1, 1, delta_on);
        let bank = EstimatorBank::new(&ls, mode, 1e-2).unwrap();
        let est = bank.link(0, 0, delta_on);
        let mut diag = ErrorDiagnostics::new(3);
        let mut rng = stream(17, &[tag::ORACLE, delta_on as u64]);
        for _ in 0..100_000 {
            let real = draw_channel(&ls, &los, &delta, &mut rng).unwrap();
            let e = bank.estimate(&real, &mut rng).unwrap();
            diag.push(&real.h.column(0).into_owned(), &e.hhat.column(0).into_owned());
        }
        let cn = frobenius(&est.c);
        assert!(frobenius(&(diag.estimate_moment() - &est.c)) / cn < 0.02);
        assert!(frobenius(&diag.cross_moment()) / cn < 0.02);
        let tr = diag.error_moment().trace().re;
        assert!((tr / est.mse() - 1.0).abs() < 0.02, "{tr} vs {}", est.mse());
    }

    #[test]
    fn estimate_moments_match_theory_nlos() {
        monte_carlo_link(PilotPowerMode::PerLinkSnr { snr: 1.0 }, false);
    }

    #[test]
    fn estimate_moments_match_theory_los() {
        monte_carlo_link(PilotPowerMode::Global { pilot_power: 1e3 }, true);
    }
}
