//! Simulation configuration: JSON file, CLI overrides and the budget guard.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::empirical::{EngineConfig, Scheme};
use crate::analytics::exact::CsiMode;
use crate::channel::LosRedraw;
use crate::error::{Error, Result};
use crate::estimation::PilotPowerMode;
use crate::geometry::{ArrayParams, BlockageEnvironment, LosExponent, PathlossParams, PlacementSpec, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_aps: usize,
    pub n_antennas: usize,
    pub n_ues: usize,
    pub area_side_km: f64,
    pub ap_height_m: f64,
    pub ue_height_m: f64,
    /// Element spacing in carrier wavelengths.
    pub antenna_spacing_wavelengths: f64,
    pub carrier_hz: f64,
    pub alpha: f64,
    /// Blockage density per km².
    pub mu_per_km2: f64,
    pub gamma_m: f64,
    pub los_exponent: LosExponent,
    pub d0_m: f64,
    pub eta: f64,
    pub ap_gain: f64,
    pub ue_gain: f64,
    pub pilot: PilotPowerMode,
    pub pilot_noise_power: f64,
    pub snr_db: Vec<f64>,
    pub symbol_power: f64,
    pub schemes: Vec<Scheme>,
    pub csi: Vec<CsiMode>,
    pub trials: usize,
    pub drops: usize,
    pub seed: u64,
    pub los_redraw: LosRedraw,
    pub mmse_regularizer: Option<f64>,
    /// AP counts for the LoS-count PMF.
    pub m_list: Vec<usize>,
    /// UE counts for the per-user rate sweep.
    pub k_list: Vec<usize>,
    /// (M, N) pairs for the AP-configuration sweep.
    pub ap_configs: Vec<(usize, usize)>,
    /// Data SNR used by the K and AP sweeps.
    pub sweep_snr_db: f64,
    /// Data SNR for MMSE SINR CDFs; conjugate CDFs use the SIR.
    pub cdf_snr_db: f64,
    /// CDF evaluation grid `(start, stop, step)` in dB.
    pub cdf_grid_db: (f64, f64, f64),
    /// Random geometries in the oracle suite.
    pub validate_geometries: usize,
    /// z-score threshold of the oracle suite.
    pub validate_z: f64,
    /// Upper limit on `MN·drops·trials`.
    pub budget: f64,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub out: Option<std::path::PathBuf>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_aps: 256,
            n_antennas: 1,
            n_ues: 16,
            area_side_km: 1.0,
            ap_height_m: 10.0,
            ue_height_m: 1.5,
            antenna_spacing_wavelengths: 0.5,
            carrier_hz: 2e9,
            alpha: 0.5,
            mu_per_km2: 300.0,
            gamma_m: 20.0,
            los_exponent: LosExponent::Crossings,
            d0_m: 1.0,
            eta: 3.76,
            ap_gain: 1.0,
            ue_gain: 1.0,
            pilot: PilotPowerMode::PerLinkSnr { snr: 100.0 },
            pilot_noise_power: 1.0,
            snr_db: (0..13).map(|i| -10.0 + 5.0 * i as f64).collect(),
            symbol_power: 1.0,
            schemes: vec![Scheme::Conjugate, Scheme::Joint],
            csi: vec![CsiMode::Accurate, CsiMode::Estimated],
            trials: 200,
            drops: 4,
            seed: 1,
            los_redraw: LosRedraw::PerDrop,
            mmse_regularizer: None,
            m_list: vec![128, 256, 512, 1024],
            k_list: vec![1, 4, 8, 16],
            ap_configs: vec![(1024, 1), (512, 2), (256, 4), (128, 8)],
            sweep_snr_db: 30.0,
            cdf_snr_db: 50.0,
            cdf_grid_db: (-40.0, 80.0, 1.0),
            validate_geometries: 20,
            validate_z: 3.0,
            budget: 1e9,
            threads: None,
            out: None,
        }
    }
}

impl SimulationConfig {
    /// Full network size: M = 1024 single-antenna APs and K = 64 UEs.
    pub fn apply_full_scale(&mut self) {
        self.n_aps = 1024;
        self.n_antennas = 1;
        self.n_ues = 64;
        self.k_list = vec![1, 16, 32, 64];
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn env(&self) -> BlockageEnvironment {
        BlockageEnvironment { alpha: self.alpha, mu: self.mu_per_km2, gamma: self.gamma_m }
    }

    pub fn array(&self, n_antennas: usize) -> ArrayParams {
        let wavelength_m = SPEED_OF_LIGHT / self.carrier_hz;
        ArrayParams { n_antennas, spacing_m: self.antenna_spacing_wavelengths * wavelength_m, wavelength_m }
    }

    pub fn placement(&self, n_aps: usize, n_antennas: usize, n_ues: usize) -> PlacementSpec {
        PlacementSpec {
            n_aps,
            n_ues,
            area_side_km: self.area_side_km,
            ap_height_m: self.ap_height_m,
            ue_height_m: self.ue_height_m,
            ap_gain: self.ap_gain,
            ue_gain: self.ue_gain,
            array: self.array(n_antennas),
            env: self.env(),
        }
    }

    pub fn pathloss(&self) -> PathlossParams {
        PathlossParams { d0_m: self.d0_m, eta: self.eta, los_exponent: self.los_exponent }
    }

    pub fn engine(&self, schemes: Vec<Scheme>, csi: Vec<CsiMode>, snr_db: Vec<f64>) -> EngineConfig {
        EngineConfig {
            snr_db,
            symbol_power: self.symbol_power,
            trials: self.trials,
            schemes,
            csi,
            los_redraw: self.los_redraw,
            mmse_regularizer: self.mmse_regularizer,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_aps == 0 || self.n_antennas == 0 || self.n_ues == 0 {
            return bad("M, N and K must be at least 1".into());
        }
        if self.trials < 2 || self.drops == 0 {
            return bad(format!("need trials >= 2 and drops >= 1 (got {}, {})", self.trials, self.drops));
        }
        if !(self.area_side_km > 0.0 && self.carrier_hz > 0.0 && self.antenna_spacing_wavelengths > 0.0) {
            return bad("area, carrier and antenna spacing must be positive".into());
        }
        if !(self.pilot_noise_power > 0.0 && self.symbol_power > 0.0) {
            return bad("noise and symbol powers must be positive".into());
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR grid must be non-empty and finite".into());
        }
        if self.schemes.is_empty() || self.csi.is_empty() {
            return bad("select at least one scheme and one CSI mode".into());
        }
        let (lo, hi, step) = self.cdf_grid_db;
        if !(step > 0.0 && hi >= lo) {
            return bad(format!("bad CDF grid {:?}", self.cdf_grid_db));
        }
        if self.ap_configs.iter().any(|&(m, n)| m == 0 || n == 0) || self.m_list.contains(&0) || self.k_list.contains(&0) {
            return bad("sweep lists must not contain zero".into());
        }
        if !(self.budget > 0.0) {
            return bad("budget must be positive".into());
        }
        self.env().validate()
    }

    /// Refuses runs whose `MN·drops·trials` exceeds the budget.
    pub fn check_budget(&self, mn: usize, drops: usize, trials: usize) -> Result<()> {
        let estimated = mn as f64 * drops as f64 * trials as f64;
        if estimated > self.budget {
            return Err(Error::BudgetExceeded { estimated, limit: self.budget });
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}
