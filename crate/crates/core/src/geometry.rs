//! Network layouts and deterministic per-link quantities.
//!
//! Horizontal positions are in kilometres, heights and link distances in
//! metres. The LoS probability follows the ITU blockage model: a link of
//! horizontal length `d` crosses on average `√(α·μ)·d` blockages, each of which
//! is taller than the ray with probability `ω`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Height gaps below this use the analytic limit of `ω`.
pub const EQUAL_HEIGHT_EPS_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageEnvironment {
    /// Fraction of built-up area.
    pub alpha: f64,
    /// Blockage density, per km².
    pub mu: f64,
    /// Average blockage altitude, metres.
    pub gamma: f64,
}

impl BlockageEnvironment {
    pub fn new(alpha: f64, mu: f64, gamma: f64) -> Result<Self> {
        let env = Self { alpha, mu, gamma };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.mu >= 0.0) || !(self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "blockage environment out of range: alpha={}, mu={}, gamma={}",
                self.alpha, self.mu, self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for BlockageEnvironment {
    fn default() -> Self {
        Self { alpha: 0.5, mu: 300.0, gamma: 20.0 }
    }
}

/// How the blockage-count exponent of the LoS probability is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LosExponent {
    /// `√(α·μ)·d`: expected number of blockages crossed.
    #[default]
    Crossings,
    /// `√(α·μ·d)`, the expression read literally.
    Literal,
}

impl LosExponent {
    pub fn exponent(self, d_km: f64, env: &BlockageEnvironment) -> f64 {
        match self {
            LosExponent::Crossings => (env.alpha * env.mu).sqrt() * d_km,
            LosExponent::Literal => (env.alpha * env.mu * d_km).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccessPoint {
    pub x_km: f64,
    pub y_km: f64,
    pub height_m: f64,
    /// Broadside (array normal) orientation in the horizontal plane.
    pub broadside_rad: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub x_km: f64,
    pub y_km: f64,
    pub height_m: f64,
    pub gain: f64,
}

/// Uniform linear array shared by all APs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayParams {
    pub n_antennas: usize,
    pub spacing_m: f64,
    pub wavelength_m: f64,
}

impl ArrayParams {
    /// Half-wavelength array at carrier frequency `carrier_hz`.
    pub fn half_wavelength(n_antennas: usize, carrier_hz: f64) -> Self {
        let wavelength_m = SPEED_OF_LIGHT / carrier_hz;
        Self { n_antennas, spacing_m: wavelength_m / 2.0, wavelength_m }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_antennas == 0 || !(self.spacing_m > 0.0) || !(self.wavelength_m > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid array parameters {self:?}")));
        }
        Ok(())
    }
}

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGeometry {
    pub aps: Vec<AccessPoint>,
    pub ues: Vec<UserEquipment>,
    pub array: ArrayParams,
    pub area_side_km: f64,
    pub env: BlockageEnvironment,
}

impl NetworkGeometry {
    pub fn n_aps(&self) -> usize {
        self.aps.len()
    }

    pub fn n_ues(&self) -> usize {
        self.ues.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.env.validate()?;
        let inside = |x: f64, y: f64| (0.0..=self.area_side_km).contains(&x) && (0.0..=self.area_side_km).contains(&y);
        if self.aps.iter().any(|a| !inside(a.x_km, a.y_km)) || self.ues.iter().any(|u| !inside(u.x_km, u.y_km)) {
            return Err(Error::InvalidConfig("node outside the simulation area".into()));
        }
        for ap in &self.aps {
            for ue in &self.ues {
                if !(ue.height_m > 0.0) || ap.height_m <= ue.height_m {
                    return Err(Error::UnsupportedGeometry(format!(
                        "AP height {} m must exceed UE height {} m > 0",
                        ap.height_m, ue.height_m
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }
}

/// Everything needed to drop a layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementSpec {
    pub n_aps: usize,
    pub n_ues: usize,
    pub area_side_km: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    pub ap_gain: f64,
    pub ue_gain: f64,
    pub array: ArrayParams,
    pub env: BlockageEnvironment,
}

/// Drops APs and UEs i.i.d. uniformly on the square, each AP with a uniform
/// broadside orientation on `[0, 2π)`.
pub fn place_uniform(spec: &PlacementSpec, seed: u64) -> Result<NetworkGeometry> {
    if spec.n_aps == 0 || spec.n_ues == 0 || !(spec.area_side_km > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "placement needs M >= 1, K >= 1 and a positive area (got M={}, K={}, side={})",
            spec.n_aps, spec.n_ues, spec.area_side_km
        )));
    }
    let mut rng = rng::stream(seed, &[tag::PLACEMENT]);
    let side = spec.area_side_km;
    let aps = (0..spec.n_aps)
        .map(|_| AccessPoint {
            x_km: rng.random::<f64>() * side,
            y_km: rng.random::<f64>() * side,
            height_m: spec.ap_height_m,
            broadside_rad: rng.random::<f64>() * TAU,
            gain: spec.ap_gain,
        })
        .collect();
    let ues = (0..spec.n_ues)
        .map(|_| UserEquipment {
            x_km: rng.random::<f64>() * side,
            y_km: rng.random::<f64>() * side,
            height_m: spec.ue_height_m,
            gain: spec.ue_gain,
        })
        .collect();
    let geom = NetworkGeometry { aps, ues, array: spec.array, area_side_km: side, env: spec.env };
    geom.validate()?;
    Ok(geom)
}

/// Error function, backed by libm (FreeBSD msun port, < 1 ulp).
pub fn erf(z: f64) -> f64 {
    libm::erf(z)
}

/// Probability that a single blockage between heights `ap_h` and `ue_h`
/// intersects the ray.
pub fn blockage_height_factor(ap_h: f64, ue_h: f64, gamma: f64) -> f64 {
    let gap = ap_h - ue_h;
    if gap < EQUAL_HEIGHT_EPS_M {
        return (-(ue_h * ue_h) / (2.0 * gamma * gamma)).exp();
    }
    let s = gamma * std::f64::consts::SQRT_2;
    // erfc difference keeps precision when both heights sit far in the tail
    let diff = if ue_h >= 0.0 {
        libm::erfc(ue_h / s) - libm::erfc(ap_h / s)
    } else {
        erf(ap_h / s) - erf(ue_h / s)
    };
    (PI / 2.0).sqrt() * gamma / gap * diff
}

/// LoS link probability `(1 − ω)^n`, clamped to `[0, 1]`.
pub fn los_probability(d_km: f64, ap_h: f64, ue_h: f64, env: &BlockageEnvironment, exponent: LosExponent) -> f64 {
    let n = exponent.exponent(d_km.max(0.0), env);
    if n == 0.0 {
        return 1.0;
    }
    let omega = blockage_height_factor(ap_h, ue_h, env.gamma).clamp(0.0, 1.0);
    (1.0 - omega).powf(n).clamp(0.0, 1.0)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub d_km: f64,
    pub x_m: f64,
    pub theta: f64,
    pub beta: f64,
    pub p_los: f64,
    /// `√(G_m G_k) ℓ'_k ℓ_m / (4π x_mk)`, the per-antenna LoS amplitude.
    pub los_amplitude: f64,
}

impl LinkMetrics {
    /// LoS power per antenna, `G_m G_k (ℓ'_k ℓ_m / (4π x_mk))²`.
    pub fn los_power(&self) -> f64 {
        self.los_amplitude * self.los_amplitude
    }
}

/// Pathloss model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossParams {
    pub d0_m: f64,
    pub eta: f64,
    pub los_exponent: LosExponent,
}

impl Default for PathlossParams {
    fn default() -> Self {
        Self { d0_m: 1.0, eta: 3.76, los_exponent: LosExponent::Crossings }
    }
}

/// Per-link metrics for all (AP m, UE k) pairs, stored AP-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSet {
    pub n_aps: usize,
    pub n_ues: usize,
    pub array: ArrayParams,
    pub links: Vec<LinkMetrics>,
}

impl LinkSet {
    #[inline]
    pub fn get(&self, m: usize, k: usize) -> &LinkMetrics {
        &self.links[m * self.n_ues + k]
    }

    pub fn n_antennas(&self) -> usize {
        self.array.n_antennas
    }

    /// LoS probabilities as an M×K row-major table.
    pub fn los_probabilities(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.p_los).collect()
    }
}

pub fn nlos_pathloss(d_m: f64, d0_m: f64, eta: f64) -> f64 {
    if d_m <= d0_m {
        1.0
    } else {
        (d_m / d0_m).powf(-eta)
    }
}

pub fn link_metrics(geom: &NetworkGeometry, params: &PathlossParams) -> Result<LinkSet> {
    if !(params.eta > 2.0) || !(params.d0_m > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "pathloss needs eta > 2 and d0 > 0 (got eta={}, d0={})",
            params.eta, params.d0_m
        )));
    }
    let mut links = Vec::with_capacity(geom.n_aps() * geom.n_ues());
    for ap in &geom.aps {
        for ue in &geom.ues {
            if ap.height_m <= ue.height_m {
                return Err(Error::UnsupportedGeometry(format!(
                    "AP height {} m does not exceed UE height {} m",
                    ap.height_m, ue.height_m
                )));
            }
            let (dx, dy) = (ue.x_km - ap.x_km, ue.y_km - ap.y_km);
            let d_km = dx.hypot(dy);
            let d_m = d_km * 1000.0;
            let gap = ap.height_m - ue.height_m;
            let x_m = d_m.hypot(gap);
            let theta = if d_km > 0.0 { wrap_angle(dy.atan2(dx) - ap.broadside_rad) } else { 0.0 };
            let los_amplitude = (ap.gain * ue.gain).sqrt() * ue.height_m * ap.height_m / (4.0 * PI * x_m);
            links.push(LinkMetrics {
                d_km,
                x_m,
                theta,
                beta: nlos_pathloss(d_m, params.d0_m, params.eta),
                p_los: los_probability(d_km, ap.height_m, ue.height_m, &geom.env, params.los_exponent),
                los_amplitude,
            });
        }
    }
    Ok(LinkSet { n_aps: geom.n_aps(), n_ues: geom.n_ues(), array: geom.array, links })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_link(d_km: f64) -> NetworkGeometry {
        NetworkGeometry {
            aps: vec![AccessPoint { x_km: 0.0, y_km: 0.0, height_m: 10.0, broadside_rad: 0.0, gain: 1.0 }],
            ues: vec![UserEquipment { x_km: d_km, y_km: 0.0, height_m: 1.5, gain: 1.0 }],
            array: ArrayParams::half_wavelength(1, 2e9),
            area_side_km: 1.0,
            env: BlockageEnvironment::default(),
        }
    }

    fn spec(m: usize, k: usize) -> PlacementSpec {
        PlacementSpec {
            n_aps: m,
            n_ues: k,
            area_side_km: 1.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            ap_gain: 1.0,
            ue_gain: 1.0,
            array: ArrayParams::half_wavelength(1, 2e9),
            env: BlockageEnvironment::default(),
        }
    }

    /// Maclaurin series of erf, summed until terms vanish.
    fn erf_series(z: f64) -> f64 {
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -z * z / n;
            sum += term / (2.0 * n + 1.0);
        }
        2.0 / PI.sqrt() * sum
    }

    #[test]
    fn erf_matches_series() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(0.353553) - 0.38292).abs() < 1e-5);
        for i in 0..60 {
            let z = -3.0 + 0.1 * i as f64;
            assert!((erf(z) - erf_series(z)).abs() < 1e-12, "z={z}");
            assert_eq!(erf(-z), -erf(z));
        }
    }

    #[test]
    fn table_two_los_probability() {
        let env = BlockageEnvironment::default();
        let omega = blockage_height_factor(10.0, 1.5, 20.0);
        let s = 20.0 * 2f64.sqrt();
        let omega_series = (PI / 2.0).sqrt() * 20.0 / 8.5 * (erf_series(10.0 / s) - erf_series(1.5 / s));
        assert!((omega - omega_series).abs() < 1e-12);
        assert!((omega - 0.9529).abs() < 1e-4);
        let n = 150f64.sqrt() * 0.1;
        let p_oracle = (1.0 - omega_series).powf(n);
        let p = los_probability(0.1, 10.0, 1.5, &env, LosExponent::Crossings);
        assert!((p - p_oracle).abs() < 1e-12);
        assert!((p - 0.0237).abs() < 1e-3);
    }

    #[test]
    fn zero_distance_or_no_blockage_is_certain_los() {
        let env = BlockageEnvironment::default();
        assert_eq!(los_probability(0.0, 10.0, 1.5, &env, LosExponent::Crossings), 1.0);
        assert_eq!(los_probability(0.0, 10.0, 1.5, &env, LosExponent::Literal), 1.0);
        let open = BlockageEnvironment { alpha: 0.0, ..env };
        assert_eq!(los_probability(0.4, 10.0, 1.5, &open, LosExponent::Crossings), 1.0);
        let empty = BlockageEnvironment { mu: 0.0, ..env };
        assert_eq!(los_probability(0.4, 10.0, 1.5, &empty, LosExponent::Literal), 1.0);
    }

    #[test]
    fn literal_exponent_is_selectable() {
        let env = BlockageEnvironment::default();
        let p = los_probability(0.1, 10.0, 1.5, &env, LosExponent::Literal);
        let omega = blockage_height_factor(10.0, 1.5, 20.0);
        assert!((p - (1.0 - omega).powf((150.0f64 * 0.1).sqrt())).abs() < 1e-14);
    }

    #[test]
    fn near_equal_heights_use_limit() {
        let lim = blockage_height_factor(1.5 + 1e-9, 1.5, 20.0);
        assert!((lim - (-(1.5f64 * 1.5) / 800.0).exp()).abs() < 1e-15);
        let close = blockage_height_factor(1.5 + 1e-4, 1.5, 20.0);
        assert!((close - lim).abs() < 1e-5);
    }

    #[test]
    fn link_metric_examples() {
        let ls = link_metrics(&one_link(0.0), &PathlossParams::default()).unwrap();
        let l = ls.get(0, 0);
        assert_eq!(l.x_m, 8.5);
        assert_eq!(l.beta, 1.0);
        assert_eq!(l.p_los, 1.0);
        assert!((l.los_amplitude - 15.0 / (4.0 * PI * 8.5)).abs() < 1e-15);
        assert!((l.los_amplitude - 0.1404).abs() < 1e-4);

        let half_m = link_metrics(&one_link(0.0005), &PathlossParams::default()).unwrap();
        assert_eq!(half_m.get(0, 0).beta, 1.0);

        let p = PathlossParams { eta: 4.0, ..Default::default() };
        let ten_m = link_metrics(&one_link(0.010), &p).unwrap();
        assert!((ten_m.get(0, 0).beta - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn inverted_heights_are_rejected() {
        let mut g = one_link(0.1);
        g.ues[0].height_m = 12.0;
        assert!(matches!(link_metrics(&g, &PathlossParams::default()), Err(Error::UnsupportedGeometry(_))));
    }

    #[test]
    fn bad_pathloss_is_rejected() {
        let g = one_link(0.1);
        let p = PathlossParams { eta: 2.0, ..Default::default() };
        assert!(matches!(link_metrics(&g, &p), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn angle_of_arrival_is_relative_to_broadside() {
        let mut g = one_link(0.1);
        g.ues[0].y_km = 0.1;
        g.ues[0].x_km = 0.0;
        g.aps[0].broadside_rad = PI / 4.0;
        let ls = link_metrics(&g, &PathlossParams::default()).unwrap();
        assert!((ls.get(0, 0).theta - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn placement_is_contained_and_deterministic() {
        let a = place_uniform(&spec(1, 1), 11).unwrap();
        assert!(a.aps[0].x_km <= 1.0 && a.ues[0].y_km >= 0.0);
        assert_eq!(a, place_uniform(&spec(1, 1), 11).unwrap());
        assert_ne!(a, place_uniform(&spec(1, 1), 12).unwrap());
        assert!(matches!(place_uniform(&spec(0, 1), 1), Err(Error::InvalidConfig(_))));
        assert!(matches!(place_uniform(&spec(1, 0), 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn mean_nearest_ap_distance() {
        // Oracle: nearest-neighbour distance of a homogeneous Poisson process of
        // intensity λ has mean 1/(2√λ); edge effects are checked by direct sampling
        // below with independently drawn uniforms.
        use rand::{Rng, SeedableRng};
        let mut oracle_rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut oracle = 0.0;
        for _ in 0..100 {
            let pts: Vec<(f64, f64)> = (0..1024).map(|_| (oracle_rng.random(), oracle_rng.random())).collect();
            let (ux, uy): (f64, f64) = (oracle_rng.random(), oracle_rng.random());
            oracle += pts.iter().map(|p| (p.0 - ux).hypot(p.1 - uy)).fold(f64::INFINITY, f64::min);
        }
        oracle /= 100.0;
        assert!((oracle - 0.5 / 32.0).abs() < 0.2 * 0.5 / 32.0);

        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..100 {
            let g = place_uniform(&spec(1024, 64), seed).unwrap();
            for ue in &g.ues {
                total += g.aps.iter().map(|a| (a.x_km - ue.x_km).hypot(a.y_km - ue.y_km)).fold(f64::INFINITY, f64::min);
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!((mean - 0.5 / 32.0).abs() < 0.2 * 0.5 / 32.0, "mean={mean}");
    }

    #[test]
    fn geometry_json_round_trip() {
        let g = place_uniform(&spec(3, 2), 5).unwrap();
        let back = NetworkGeometry::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(g, back);
    }

    proptest! {
        #[test]
        fn los_probability_decreases_with_distance(d1 in 0.0f64..1.4, dd in 1e-6f64..0.5, gamma in 1.0f64..60.0) {
            let env = BlockageEnvironment { alpha: 0.5, mu: 300.0, gamma };
            let p1 = los_probability(d1, 10.0, 1.5, &env, LosExponent::Crossings);
            let p2 = los_probability(d1 + dd, 10.0, 1.5, &env, LosExponent::Crossings);
            prop_assert!(p2 < p1);
            prop_assert!((0.0..=1.0).contains(&p2));
        }

        #[test]
        fn omega_is_a_probability(ue_h in 0.1f64..30.0, gap in 1e-3f64..50.0, gamma in 0.5f64..80.0) {
            let w = blockage_height_factor(ue_h + gap, ue_h, gamma);
            prop_assert!((0.0..1.0).contains(&w));
        }

        #[test]
        fn pathloss_is_bounded_and_continuous(d in 0.0f64..2000.0, eta in 2.01f64..6.0) {
            let b = nlos_pathloss(d, 1.0, eta);
            prop_assert!(b > 0.0 && b <= 1.0);
            prop_assert!((nlos_pathloss(1.0 + 1e-12, 1.0, eta) - 1.0).abs() < 1e-9);
        }
    }
}
