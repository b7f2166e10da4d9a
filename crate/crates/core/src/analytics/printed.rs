//! Closed-form gain statistics evaluated term by term as stated.
//!
//! These are kept apart from [`super::exact`] on purpose: several of the
//! stated expressions are known not to agree with the model (see the
//! validation suite), and bounds are always computed from the exact engine.
//! Notation: `a_mk` is the per-antenna LoS power `G_kG_m(ℓ'_kℓ_m/(4πx_mk))²`,
//! `P_mk` the LoS probability and `β_mk` the NLoS pathloss.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::Serialize;

use super::tuples::distinct_sum;
use crate::error::Result;
use crate::estimation::{psd_sqrt, EstimatorBank};
use crate::geometry::LinkSet;
use crate::linalg::{c, identity, trace_re, CMat};

struct UeColumn {
    a: Vec<f64>,
    p: Vec<f64>,
    beta: Vec<f64>,
}

fn column(links: &LinkSet, probs: &[f64], k: usize) -> UeColumn {
    let m = links.n_aps;
    UeColumn {
        a: (0..m).map(|i| links.get(i, k).los_power()).collect(),
        p: (0..m).map(|i| probs[i * links.n_ues + k]).collect(),
        beta: (0..m).map(|i| links.get(i, k).beta).collect(),
    }
}

fn zip_prod(xs: &[&[f64]]) -> Vec<f64> {
    (0..xs[0].len()).map(|j| xs.iter().map(|x| x[j]).product()).collect()
}

fn pow(x: &[f64], e: i32) -> Vec<f64> {
    x.iter().map(|v| v.powi(e)).collect()
}

/// Stated closed-form statistics of the diagonal gain `g_kk`.
#[derive(Debug, Clone, Serialize)]
pub struct GkkPrinted {
    pub mean: f64,
    /// Second moment as stated alongside the conjugate upper bound.
    pub second_bound_form: f64,
    /// Second moment assembled from the component moments
    /// (`E|g⁽¹⁾|² + E|g⁽²⁾|² + E|g⁽³⁾|² + 2 E[g⁽¹⁾g⁽²⁾*]`).
    pub second_components: f64,
    pub var: f64,
    pub e_g1_sq: f64,
    pub e_g2_sq: f64,
    pub e_g3_sq: f64,
    pub e_g1_g2: f64,
    pub e_g1_4: f64,
    pub e_g2_4: f64,
    pub e_g3_4: f64,
    pub e_g1_3: f64,
    pub e_g2_3: f64,
    pub e_g2sq_g3sq: f64,
    pub e_g3sq_g2: f64,
    pub fourth: f64,
    /// `E|g|⁴ − (E|g|²)²` using the component second moment.
    pub var_abs_sq: f64,
}

pub fn gkk_printed(links: &LinkSet, probs: &[f64], k: usize) -> GkkPrinted {
    let n = links.n_antennas() as f64;
    let UeColumn { a, p, beta } = column(links, probs, k);
    let sum = |v: &[f64]| v.iter().sum::<f64>();
    let pa = zip_prod(&[&p, &a]);
    let pa2 = zip_prod(&[&p, &pow(&a, 2)]);
    let pba = zip_prod(&[&p, &beta, &a]);
    let sum_b = sum(&beta);
    let sum_b2 = sum(&pow(&beta, 2));

    let mean = n * (sum(&pa) + sum_b);
    let e_g1_sq = n * n * (sum(&pa2) + distinct_sum(&[&pa, &pa]));
    let e_g2_sq = n * sum_b2 + n * n * sum_b * sum_b;
    let e_g3_sq = 2.0 * n * sum(&pba);
    let e_g1_g2 = n * n * sum_b * sum(&pa);
    let second_bound_form = n * n * (sum(&pa2) + distinct_sum(&[&pa, &pa])) + n * sum_b2 + 4.0 * n * sum(&pba);
    let second_components = e_g1_sq + e_g2_sq + e_g3_sq + 2.0 * e_g1_g2;
    let var = n * n * sum(&zip_prod(&[&p, &p.iter().map(|x| 1.0 - x).collect::<Vec<_>>(), &pow(&a, 2)])) + n * sum_b2 + 2.0 * n * sum(&pba);

    // fourth-moment components
    let a2 = pow(&a, 2);
    let a3 = pow(&a, 3);
    let pa2v = zip_prod(&[&p, &a2]);
    let pa3 = zip_prod(&[&p, &a3]);
    let pa4 = zip_prod(&[&p, &pow(&a, 4)]);
    let t1 = distinct_sum(&[&pa, &pa, &pa, &pa]);
    let t2 = 6.0 * sum(&pa4);
    let t3 = distinct_sum(&[&pa2v, &pa, &pa]);
    let t4 = 2.0 * distinct_sum(&[&pa2v, &pa, &pa]);
    let t5 = 3.0 * distinct_sum(&[&pa2v, &pa, &pa]);
    let t6 = 2.0 * (distinct_sum(&[&pa2v, &pa2v]) + 2.0 * distinct_sum(&[&pa, &pa3]));
    let t7 = 2.0 * distinct_sum(&[&a3, &a]);
    let t8 = distinct_sum(&[&pa2v, &pa2v]) + 2.0 * distinct_sum(&[&pa3, &pa]);
    let e_g1_4 = n.powi(4) * (t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8);
    let e_g2_4 = sum_b.powi(4) * n * (n.powi(3) + 12.0 * n * n + 104.0 * n + 513.0);
    let pab = zip_prod(&[&p, &a, &beta]);
    let e_g3_4 = n * n * (18.0 * sum(&zip_prod(&[&a2, &pow(&beta, 2), &p])) + 3.0 * distinct_sum(&[&pab, &pab]));
    let e_g1_3 = n.powi(3) * (distinct_sum(&[&pa, &pa, &pa]) + 2.0 * sum(&pa3) + 2.0 * distinct_sum(&[&pa, &pa2v]));
    let e_g2_3 = sum_b.powi(3) * n * (n * n + 3.0 * n + 26.0);
    let bracket = distinct_sum(&[&beta, &beta]) * n * (n - 1.0) + n * sum_b * sum_b + sum_b2 * n * (n - 1.0) + 3.0 * n * sum_b2;
    let e_g2sq_g3sq = 2.0 * n * sum(&pab) * bracket;
    let e_g3sq_g2 = 0.25
        * (n * n * sum_b * sum(&pab) + n * distinct_sum(&[&beta, &pab]) + 3.0 * n * sum(&zip_prod(&[&pow(&beta, 3), &a, &p])));
    let e_g1 = n * sum(&pa);
    let e_g2 = n * sum_b;
    // unordered pairs (1,2), (1,3), (2,3); the (1,3) cross moment is not
    // stated and is taken as the product of second moments
    let pair_sum = e_g1_sq * e_g2_sq + e_g1_sq * e_g3_sq + e_g2sq_g3sq;
    let fourth = e_g1_4 + e_g2_4 + e_g3_4 + 6.0 * 2.0 * pair_sum + 4.0 * e_g1_3 * e_g2 + 4.0 * e_g2_3 * e_g1 + 12.0 * e_g3sq_g2 * e_g1;
    GkkPrinted {
        mean,
        second_bound_form,
        second_components,
        var,
        e_g1_sq,
        e_g2_sq,
        e_g3_sq,
        e_g1_g2,
        e_g1_4,
        e_g2_4,
        e_g3_4,
        e_g1_3,
        e_g2_3,
        e_g2sq_g3sq,
        e_g3sq_g2,
        fourth,
        var_abs_sq: fourth - second_components * second_components,
    }
}

/// Stated closed-form statistics of the off-diagonal gain `g_kl`.
#[derive(Debug, Clone, Serialize)]
pub struct GklPrinted {
    /// Mean with array index `i = 1..N` and phases exactly as stated.
    pub mean_literal: Complex64,
    /// Same expression with `i = 0..N−1`; this is `E[g_lk] = E[g_kl]*`.
    pub mean_zero_index: Complex64,
    /// Second moment as stated with the upper bound (complex as written).
    pub second: Complex64,
    /// Variance as stated (complex as written).
    pub var: Complex64,
}

/// LoS cross term of AP m with array index offset `first` (1 as stated).
fn los_cross(links: &LinkSet, m: usize, k: usize, l: usize, first: usize) -> Complex64 {
    let (lk, ll) = (links.get(m, k), links.get(m, l));
    let arr = &links.array;
    let amp = lk.los_amplitude * ll.los_amplitude;
    let phase = Complex64::from_polar(1.0, TAU / arr.wavelength_m * (lk.x_m - ll.x_m));
    let step = TAU * arr.spacing_m / arr.wavelength_m * (lk.theta.sin() - ll.theta.sin());
    let s: Complex64 = (first..first + arr.n_antennas).map(|i| Complex64::from_polar(1.0, step * i as f64)).sum();
    phase * s * amp
}

pub fn gkl_printed(links: &LinkSet, probs: &[f64], k: usize, l: usize) -> GklPrinted {
    let n = links.n_antennas() as f64;
    let kk = links.n_ues;
    let (mut lit, mut zero, mut var_los) = (c(0.0), c(0.0), c(0.0));
    let (mut bb, mut pba) = (0.0, 0.0);
    for m in 0..links.n_aps {
        let (pk, pl) = (probs[m * kk + k], probs[m * kk + l]);
        let t1 = los_cross(links, m, k, l, 1);
        lit += t1 * (pk * pl);
        zero += los_cross(links, m, k, l, 0) * (pk * pl);
        var_los += t1 * (pl * (1.0 - pl) * pk * (1.0 - pk));
        bb += links.get(m, k).beta * links.get(m, l).beta;
        pba += pk * links.get(m, l).beta * links.get(m, k).los_power();
    }
    let tail = n * bb + 4.0 * n * pba;
    GklPrinted { mean_literal: lit, mean_zero_index: zero, second: lit + tail, var: var_los + tail }
}

/// Stated `var(z_k)/N0`.
pub fn zk_variance_printed(links: &LinkSet, probs: &[f64], k: usize) -> f64 {
    let n = links.n_antennas() as f64;
    (0..links.n_aps)
        .map(|m| {
            let l = links.get(m, k);
            n * (probs[m * links.n_ues + k] * l.los_power() + l.beta)
        })
        .sum()
}

/// Stated estimated-CSI statistics for one UE.
#[derive(Debug, Clone)]
pub struct EstCsiPrinted {
    pub mean_ghat: f64,
    pub second_ghat: f64,
    pub second_gtilde: f64,
    /// `Č_mk`, the estimate covariance when the link is LoS.
    pub c_check: Vec<CMat>,
    /// `P·Č^{1/2} + (1−P)·(βE_p/(βE_p+N0))^{1/2}·I`.
    pub mean_c_half: Vec<CMat>,
    /// The same with the NLoS scalar not square-rooted, as written.
    pub mean_c_half_unrooted: Vec<CMat>,
}

pub fn est_csi_printed(links: &LinkSet, probs: &[f64], bank: &EstimatorBank, k: usize) -> Result<EstCsiPrinted> {
    let n = links.n_antennas();
    let kk = links.n_ues;
    let mut out = EstCsiPrinted {
        mean_ghat: 0.0,
        second_ghat: 0.0,
        second_gtilde: 0.0,
        c_check: Vec::new(),
        mean_c_half: Vec::new(),
        mean_c_half_unrooted: Vec::new(),
    };
    let mut quad = Vec::new(); // (P·a·aᴴČa, β·tr E[C])
    for m in 0..links.n_aps {
        let l = links.get(m, k);
        let p = probs[m * kk + k];
        let (on, off) = (bank.link(m, k, true), bank.link(m, k, false));
        let check = on.c.clone();
        let root = psd_sqrt(&check)?;
        let steer = crate::channel::steering_vector(l.theta, n, links.array.spacing_m, links.array.wavelength_m);
        let a = l.los_power();
        let ratio = l.beta * off.pilot_power / (l.beta * off.pilot_power + off.noise_power);
        out.mean_c_half.push(&root * c(p) + identity(n) * c((1.0 - p) * ratio.sqrt()));
        out.mean_c_half_unrooted.push(&root * c(p) + identity(n) * c((1.0 - p) * ratio));
        let mean_c = &check * c(p) + &off.c * c(1.0 - p);
        let ac_half_a = (steer.adjoint() * &root * &steer)[(0, 0)].re;
        let ac_a = (steer.adjoint() * &check * &steer)[(0, 0)].re;
        out.mean_ghat += p * a * ac_half_a + l.beta * trace_re(&mean_c);
        quad.push((p, a, ac_a, l.beta, trace_re(&mean_c), trace_re(&check)));
        // E[ĥᴴC̄ĥ] with ĥ distributed like the channel
        let hbar = crate::channel::los_channel(l, &links.array);
        let los_q = (hbar.adjoint() * &on.cbar * &hbar)[(0, 0)].re;
        out.second_gtilde += p * (los_q + l.beta * trace_re(&on.cbar)) + (1.0 - p) * l.beta * trace_re(&off.cbar);
        out.c_check.push(check);
    }
    let mut s = 0.0;
    for &(p, a, q, b, tr, trc) in &quad {
        s += p * a * a * q * q + b * b * tr * tr + 4.0 * p * b * a * q * trc;
    }
    for (i, &(pi, ai, qi, bi, tri, _)) in quad.iter().enumerate() {
        for (j, &(pj, aj, qj, bj, trj, _)) in quad.iter().enumerate() {
            if i != j {
                s += pi * pj * ai * aj * qi * qj;
            }
            s += bi * bj * tri * trj;
        }
    }
    out.second_ghat = s;
    Ok(out)
}
