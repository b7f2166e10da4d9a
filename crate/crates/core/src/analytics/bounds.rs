//! Rate bounds from gain moments.

use serde::{Deserialize, Serialize};

use super::exact::ConjMoments;
use crate::error::Result;
use crate::linalg::{log2_det_hpd, log2_det_i_plus_scaled, CMat};

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Stream-wise upper and lower bounds for one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamBound {
    pub upper: f64,
    pub lower: f64,
}

/// `upper = log2(1 + S·E_s/D)`,
/// `lower = [log2(S·E_s) − log2(e)·V/(2S²) − log2 D]⁺`
/// for signal second moment `S`, its variance `V = var(|g|²)` and
/// interference-plus-noise `D`.
pub fn stream_bound(signal_second: f64, signal_var: f64, denominator: f64, es: f64) -> StreamBound {
    let s = signal_second * es;
    if !(s > 0.0) {
        return StreamBound { upper: 0.0, lower: 0.0 };
    }
    if !(denominator > 0.0) {
        return StreamBound { upper: f64::INFINITY, lower: f64::INFINITY };
    }
    let upper = (1.0 + s / denominator).log2();
    let lower = s.log2() - LOG2_E * signal_var / (2.0 * signal_second * signal_second) - denominator.log2();
    StreamBound { upper, lower: lower.max(0.0) }
}

/// Interference-plus-noise term of the conjugate-combining rate of UE k:
/// `Σ_{l≠k} E|g_kl|² E_s,l + E|g̃_kk|² E_s,k + var(z_k)`.
pub fn conj_denominator(m: &ConjMoments, symbol_powers: &[f64], n0: f64, k: usize) -> f64 {
    let interference: f64 = (0..symbol_powers.len()).filter(|&l| l != k).map(|l| m.second_gkl[k][l] * symbol_powers[l]).sum();
    interference + m.second_gtilde[k] * symbol_powers[k] + n0 * m.noise_gain[k]
}

/// Per-UE conjugate-combining bounds (accurate or estimated CSI, depending
/// on how `m` was computed).
pub fn conj_rate_bounds(m: &ConjMoments, symbol_powers: &[f64], n0: f64) -> Vec<StreamBound> {
    (0..symbol_powers.len())
        .map(|k| stream_bound(m.second_gkk[k], m.var_abs_sq[k], conj_denominator(m, symbol_powers, n0, k), symbol_powers[k]))
        .collect()
}

/// Closed-form parts of the joint-detection bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointBound {
    /// `log2 det(I + W E[G])`.
    pub upper: f64,
    /// `log2 det(W E[G])` before the `[·]⁺` clamp; `None` when `E[G]` is singular.
    pub log_det_scaled: Option<f64>,
}

impl JointBound {
    /// `[log2 det(W E[G])]⁺`, zero when `E[G]` is singular.
    pub fn approx(&self) -> f64 {
        self.log_det_scaled.map_or(0.0, |v| v.max(0.0))
    }

    /// `[log2 det(W E[G]) + E log2 det Ψ]⁺`.
    pub fn lower(&self, mean_log_det_psi: f64) -> f64 {
        self.log_det_scaled.map_or(0.0, |v| (v + mean_log_det_psi).max(0.0))
    }
}

/// Bounds for weights `W = diag(E_s/N0)` (or `E_s/σ_y²`).
pub fn joint_bound(expected_gram: &CMat, weights: &[f64]) -> Result<JointBound> {
    let upper = log2_det_i_plus_scaled(expected_gram, weights)?;
    let log_det_scaled = log2_det_hpd(expected_gram).ok().map(|d| d + weights.iter().map(|w| w.log2()).sum::<f64>());
    Ok(JointBound { upper, log_det_scaled })
}

/// Per-UE sample moments of MMSE-combiner gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmseMoments {
    /// `E|f_kk|²`.
    pub signal_second: f64,
    /// `var(|f_kk|²)`.
    pub signal_var: f64,
    /// `Σ_{l≠k} E|f_kl|² E_s,l + Σ_l E|f̃_kl|² E_s,l + var(ξ_k)`.
    pub denominator: f64,
}

pub fn mmse_rate_bound(m: &MmseMoments, es: f64) -> StreamBound {
    stream_bound(m.signal_second, m.signal_var, m.denominator, es)
}
