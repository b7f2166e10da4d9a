//! The experiments behind the CLI subcommands.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::SimulationConfig;
use super::output::ExperimentResult;
use crate::analytics::empirical::{combine_drops, csi_name, noise_power, run_drop, sir_samples, DropInput, DropRates, Scheme};
use crate::analytics::exact::{error_power_per_antenna, CsiMode, MomentModel};
use crate::analytics::oracle::validation_suite;
use crate::channel::{draw_los_indicators, los_field, LosIndicators};
use crate::error::{Error, Result};
use crate::estimation::EstimatorBank;
use crate::geometry::{link_metrics, place_uniform, LinkSet, NetworkGeometry};
use crate::linalg::CMat;
use crate::rng::{derive_seed, stream, tag};

/// One CSV file plus the summary stored in its sidecar.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub stem: String,
    pub csv: String,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: &'static str,
    pub artifacts: Vec<Artifact>,
    /// One-line human summary.
    pub line: String,
    /// Set by `validate` when a required check failed.
    pub validation_failed: bool,
}

/// A network drop with everything the engines need.
#[derive(Debug, Clone)]
pub struct Drop {
    pub geometry: NetworkGeometry,
    pub links: LinkSet,
    pub los: Arc<CMat>,
    pub delta: LosIndicators,
    pub bank: Option<EstimatorBank>,
    pub index: u64,
}

impl Drop {
    pub fn input(&self) -> DropInput<'_> {
        DropInput { links: &self.links, los: Arc::clone(&self.los), bank: self.bank.as_ref(), delta: self.delta.clone(), drop_index: self.index }
    }
}

pub fn place(cfg: &SimulationConfig, m: usize, n: usize, k: usize, index: u64) -> Result<(NetworkGeometry, LinkSet)> {
    let geometry = place_uniform(&cfg.placement(m, n, k), derive_seed(cfg.seed, &[tag::PLACEMENT, index]))?;
    let links = link_metrics(&geometry, &cfg.pathloss())?;
    Ok((geometry, links))
}

pub fn build_drop(cfg: &SimulationConfig, m: usize, n: usize, k: usize, index: u64, with_bank: bool) -> Result<Drop> {
    let (geometry, links) = place(cfg, m, n, k, index)?;
    let delta = draw_los_indicators(&links, &mut stream(cfg.seed, &[tag::LOS, index]));
    let bank = if with_bank { Some(EstimatorBank::new(&links, cfg.pilot, cfg.pilot_noise_power)?) } else { None };
    let los = Arc::new(los_field(&links));
    Ok(Drop { geometry, links, los, delta, bank, index })
}

/// Rates averaged over `cfg.drops` drops of an (M, N, K) network.
pub fn rate_drops(cfg: &SimulationConfig, m: usize, n: usize, k: usize, schemes: Vec<Scheme>, csi: Vec<CsiMode>, snr_db: Vec<f64>) -> Result<DropRates> {
    cfg.check_budget(m * n, cfg.drops, cfg.trials)?;
    let with_bank = csi.contains(&CsiMode::Estimated);
    let engine = cfg.engine(schemes, csi, snr_db);
    let mut all = Vec::with_capacity(cfg.drops);
    for d in 0..cfg.drops as u64 {
        let drop = build_drop(cfg, m, n, k, d, with_bank)?;
        all.push(run_drop(&engine, &drop.input())?);
    }
    combine_drops(&all)
}

fn series_name(scheme: Scheme, csi: CsiMode) -> String {
    format!("{}_{}", scheme.name(), csi_name(csi))
}

fn column<F: Fn(&crate::analytics::empirical::RatePoint) -> f64>(r: &DropRates, scheme: Scheme, csi: CsiMode, f: F) -> Vec<f64> {
    r.get(scheme, csi).map(|s| s.points.iter().map(f).collect()).unwrap_or_default()
}

/// PMF of the number of LoS links per UE, one table per M.
pub fn pmf_los(cfg: &SimulationConfig) -> Result<Outcome> {
    let mut artifacts = Vec::new();
    let mut parts = Vec::new();
    for &m in &cfg.m_list {
        cfg.check_budget(m, cfg.drops, 1)?;
        let counts: Vec<Vec<usize>> = (0..cfg.drops as u64)
            .into_par_iter()
            .map(|d| -> Result<Vec<usize>> {
                let (_, links) = place(cfg, m, 1, cfg.n_ues, d)?;
                let delta = draw_los_indicators(&links, &mut stream(cfg.seed, &[tag::LOS, d]));
                Ok((0..cfg.n_ues).map(|k| delta.los_count(k)).collect())
            })
            .collect::<Result<_>>()?;
        let all: Vec<usize> = counts.into_iter().flatten().collect();
        let total = all.len() as f64;
        let top = all.iter().copied().max().unwrap_or(0);
        let mut hist = vec![0usize; top + 1];
        for &c in &all {
            hist[c] += 1;
        }
        let pmf: Vec<f64> = hist.iter().map(|&h| h as f64 / total).collect();
        // binomial standard errors; UEs of one drop share the AP layout, so these are optimistic
        let se: Vec<f64> = pmf.iter().map(|p| (p * (1.0 - p) / total).sqrt()).collect();
        let p_ge1 = 1.0 - pmf[0];
        let p_ge1_se = (p_ge1 * (1.0 - p_ge1) / total).sqrt();
        let mean = all.iter().sum::<usize>() as f64 / total;
        let mut r = ExperimentResult::new("pmf-los", "los_links", (0..=top).map(|x| x as f64).collect(), cfg);
        r.push("pmf", pmf, se)?;
        parts.push(format!("M={m}: P(>=1 LoS)={p_ge1:.3}"));
        artifacts.push(Artifact {
            stem: format!("pmf_los_m{m}"),
            csv: r.to_csv(),
            summary: json!({ "n_aps": m, "samples": all.len(), "p_at_least_one": p_ge1, "p_at_least_one_se": p_ge1_se, "mean_los_links": mean }),
        });
    }
    Ok(Outcome { experiment: "pmf-los", artifacts, line: parts.join(", "), validation_failed: false })
}

/// Sum rate and bounds versus data SNR.
pub fn rates(cfg: &SimulationConfig) -> Result<Outcome> {
    let r = rate_drops(cfg, cfg.n_aps, cfg.n_antennas, cfg.n_ues, cfg.schemes.clone(), cfg.csi.clone(), cfg.snr_db.clone())?;
    let mut out = ExperimentResult::new("rates", "snr_db", cfg.snr_db.clone(), cfg);
    let mut singular = Vec::new();
    for s in &r.series {
        let name = series_name(s.scheme, s.csi);
        out.push(&name, column(&r, s.scheme, s.csi, |p| p.empirical), column(&r, s.scheme, s.csi, |p| p.empirical_se))?;
        out.push(format!("{name}_upper"), column(&r, s.scheme, s.csi, |p| p.upper), column(&r, s.scheme, s.csi, |p| p.upper_se))?;
        out.push(format!("{name}_lower"), column(&r, s.scheme, s.csi, |p| p.lower), column(&r, s.scheme, s.csi, |p| p.lower_se))?;
        if s.scheme == Scheme::Joint {
            out.push(format!("{name}_approx"), column(&r, s.scheme, s.csi, |p| p.approx.unwrap_or(0.0)), vec![0.0; cfg.snr_db.len()])?;
        }
        if s.points.iter().any(|p| p.singular) {
            singular.push(name);
        }
    }
    let last: Vec<String> = r
        .series
        .iter()
        .map(|s| format!("{}={:.2}", series_name(s.scheme, s.csi), s.points.last().map_or(0.0, |p| p.empirical)))
        .collect();
    let summary = json!({ "drops": cfg.drops, "trials": cfg.trials, "singular_gram": singular, "drop_rates": r });
    Ok(Outcome {
        experiment: "rates",
        artifacts: vec![Artifact { stem: "rates".into(), csv: out.to_csv(), summary }],
        line: format!("sum rate at {} dB: {}", cfg.snr_db.last().unwrap_or(&0.0), last.join(", ")),
        validation_failed: false,
    })
}

/// Conjugate, MMSE and joint sum rates for both CSI modes.
pub fn compare(cfg: &SimulationConfig) -> Result<Outcome> {
    let schemes = vec![Scheme::Conjugate, Scheme::Mmse, Scheme::Joint];
    let r = rate_drops(cfg, cfg.n_aps, cfg.n_antennas, cfg.n_ues, schemes.clone(), cfg.csi.clone(), cfg.snr_db.clone())?;
    let mut out = ExperimentResult::new("compare", "snr_db", cfg.snr_db.clone(), cfg);
    for s in &r.series {
        out.push(series_name(s.scheme, s.csi), column(&r, s.scheme, s.csi, |p| p.empirical), column(&r, s.scheme, s.csi, |p| p.empirical_se))?;
    }
    let mut summary = serde_json::Map::new();
    let mut parts = Vec::new();
    for &csi in &cfg.csi {
        let joint = column(&r, Scheme::Joint, csi, |p| p.empirical);
        let mmse = column(&r, Scheme::Mmse, csi, |p| p.empirical);
        let gap: Vec<f64> = joint.iter().zip(&mmse).map(|(j, m)| j - m).collect();
        let rel: f64 = joint.iter().zip(&mmse).map(|(j, m)| if *j > 0.0 { (j - m).abs() / j } else { 0.0 }).fold(0.0, f64::max);
        parts.push(format!("{}: max |joint-mmse|/joint={rel:.3}", csi_name(csi)));
        summary.insert(csi_name(csi).into(), json!({ "joint_minus_mmse": gap, "max_relative_gap": rel }));
    }
    Ok(Outcome {
        experiment: "compare",
        artifacts: vec![Artifact { stem: "compare".into(), csv: out.to_csv(), summary: summary.into() }],
        line: parts.join(", "),
        validation_failed: false,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CdfSummary {
    pub series: String,
    pub samples: usize,
    pub cdf_at_0db: f64,
    pub median_db: f64,
    pub no_los_fraction: f64,
}

/// Empirical CDF of per-UE SIR (conjugate) or SINR at `cdf_snr_db` (MMSE).
pub fn cdf(cfg: &SimulationConfig) -> Result<Outcome> {
    cfg.check_budget(cfg.n_aps * cfg.n_antennas, cfg.drops, cfg.trials)?;
    let schemes: Vec<Scheme> = cfg.schemes.iter().copied().filter(|s| *s != Scheme::Joint).collect();
    if schemes.is_empty() {
        return Err(Error::InvalidConfig("the CDF experiment needs the conjugate or MMSE scheme".into()));
    }
    let with_bank = cfg.csi.contains(&CsiMode::Estimated);
    let n0 = noise_power(cfg.cdf_snr_db, cfg.symbol_power);
    let mut pooled: Vec<(Scheme, CsiMode, Vec<f64>)> = Vec::new();
    let mut no_los = 0.0;
    for d in 0..cfg.drops as u64 {
        let drop = build_drop(cfg, cfg.n_aps, cfg.n_antennas, cfg.n_ues, d, with_bank)?;
        no_los += (0..cfg.n_ues).filter(|&k| drop.delta.los_count(k) == 0).count() as f64 / cfg.n_ues as f64;
        let model = MomentModel::new(&drop.links, drop.bank.as_ref())?;
        let probs = drop.delta.as_probabilities();
        for &scheme in &schemes {
            for &csi in &cfg.csi {
                let noise = if scheme == Scheme::Conjugate { 0.0 } else { n0 };
                let reg = match (cfg.mmse_regularizer, csi) {
                    (Some(psi), _) => psi,
                    (None, CsiMode::Accurate) => n0,
                    (None, CsiMode::Estimated) => n0 + error_power_per_antenna(&model, &probs, &vec![cfg.symbol_power; cfg.n_ues])?,
                } / cfg.symbol_power;
                let s = sir_samples(&drop.input(), scheme, csi, cfg.trials, cfg.seed, cfg.los_redraw, reg, noise / cfg.symbol_power)?;
                match pooled.iter_mut().find(|(a, b, _)| *a == scheme && *b == csi) {
                    Some(p) => p.2.extend(s),
                    None => pooled.push((scheme, csi, s)),
                }
            }
        }
    }
    let no_los_fraction = no_los / cfg.drops as f64;
    let (lo, hi, step) = cfg.cdf_grid_db;
    let grid: Vec<f64> = (0..).map(|i| lo + step * i as f64).take_while(|x| *x <= hi + 1e-9).collect();
    let mut out = ExperimentResult::new("cdf", "sinr_db", grid.clone(), cfg);
    let mut summaries = Vec::new();
    for (scheme, csi, mut s) in pooled {
        s.sort_by(|a, b| a.total_cmp(b));
        let n = s.len() as f64;
        let at = |x: f64| s.partition_point(|v| *v <= x) as f64 / n;
        let f: Vec<f64> = grid.iter().map(|&x| at(x)).collect();
        let se: Vec<f64> = f.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
        let name = series_name(scheme, csi);
        out.push(&name, f, se)?;
        summaries.push(CdfSummary { series: name, samples: s.len(), cdf_at_0db: at(0.0), median_db: s[s.len() / 2], no_los_fraction });
    }
    let line = summaries.iter().map(|c| format!("{}: CDF(0 dB)={:.3}", c.series, c.cdf_at_0db)).collect::<Vec<_>>().join(", ");
    Ok(Outcome {
        experiment: "cdf",
        artifacts: vec![Artifact { stem: "cdf".into(), csv: out.to_csv(), summary: json!({ "series": summaries, "no_los_fraction": no_los_fraction, "sinr_snr_db": cfg.cdf_snr_db }) }],
        line: format!("{line} (no-LoS fraction {no_los_fraction:.3})"),
        validation_failed: false,
    })
}

/// Per-user rate versus K at `sweep_snr_db`, accurate CSI.
pub fn sweep_k(cfg: &SimulationConfig) -> Result<Outcome> {
    let schemes = vec![Scheme::Conjugate, Scheme::Mmse];
    let x: Vec<f64> = cfg.k_list.iter().map(|&k| k as f64).collect();
    let mut vals = vec![(Vec::new(), Vec::new()); schemes.len()];
    for &k in &cfg.k_list {
        let r = rate_drops(cfg, cfg.n_aps, cfg.n_antennas, k, schemes.clone(), vec![CsiMode::Accurate], vec![cfg.sweep_snr_db])?;
        for (i, &s) in schemes.iter().enumerate() {
            let p = &r.get(s, CsiMode::Accurate).expect("series present").points[0];
            vals[i].0.push(p.empirical / k as f64);
            vals[i].1.push(p.empirical_se / k as f64);
        }
    }
    let mut out = ExperimentResult::new("sweep-k", "n_ues", x, cfg);
    for (i, s) in schemes.iter().enumerate() {
        out.push(series_name(*s, CsiMode::Accurate), vals[i].0.clone(), vals[i].1.clone())?;
    }
    let line = schemes
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}: {:.3} -> {:.3} bit/s/Hz per user", s.name(), vals[i].0.first().unwrap_or(&0.0), vals[i].0.last().unwrap_or(&0.0)))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Outcome {
        experiment: "sweep-k",
        artifacts: vec![Artifact { stem: "sweep_k".into(), csv: out.to_csv(), summary: json!({ "snr_db": cfg.sweep_snr_db }) }],
        line,
        validation_failed: false,
    })
}

/// Sum rate per (M, N) configuration at `sweep_snr_db`, accurate CSI.
pub fn sweep_ap(cfg: &SimulationConfig) -> Result<Outcome> {
    let schemes = vec![Scheme::Conjugate, Scheme::Mmse];
    let x: Vec<f64> = cfg.ap_configs.iter().map(|&(m, _)| m as f64).collect();
    let mut vals = vec![(Vec::new(), Vec::new()); schemes.len()];
    for &(m, n) in &cfg.ap_configs {
        if m == 0 {
            for v in vals.iter_mut() {
                v.0.push(0.0);
                v.1.push(0.0);
            }
            continue;
        }
        let r = rate_drops(cfg, m, n, cfg.n_ues, schemes.clone(), vec![CsiMode::Accurate], vec![cfg.sweep_snr_db])?;
        for (i, &s) in schemes.iter().enumerate() {
            let p = &r.get(s, CsiMode::Accurate).expect("series present").points[0];
            vals[i].0.push(p.empirical);
            vals[i].1.push(p.empirical_se);
        }
    }
    let mut out = ExperimentResult::new("sweep-ap", "n_aps", x, cfg);
    let mut ratios = serde_json::Map::new();
    for (i, s) in schemes.iter().enumerate() {
        out.push(series_name(*s, CsiMode::Accurate), vals[i].0.clone(), vals[i].1.clone())?;
        let (first, last) = (vals[i].0.first().copied().unwrap_or(0.0), vals[i].0.last().copied().unwrap_or(0.0));
        ratios.insert(s.name().into(), json!(if last > 0.0 { first / last } else { f64::NAN }));
    }
    let gap: Vec<f64> = vals[1].0.iter().zip(&vals[0].0).map(|(m, c)| m - c).collect();
    Ok(Outcome {
        experiment: "sweep-ap",
        artifacts: vec![Artifact {
            stem: "sweep_ap".into(),
            csv: out.to_csv(),
            summary: json!({ "snr_db": cfg.sweep_snr_db, "configs": cfg.ap_configs, "first_over_last": ratios, "mmse_minus_conj": gap }),
        }],
        line: format!("first/last config sum-rate ratio: {}", serde_json::Value::from(ratios)),
        validation_failed: false,
    })
}

/// Closed forms versus brute-force oracles; `trials` is the draw count.
pub fn validate(cfg: &SimulationConfig) -> Result<Outcome> {
    cfg.check_budget(32 * 4, cfg.validate_geometries, cfg.trials)?;
    let rep = validation_suite(cfg.validate_geometries, cfg.trials, cfg.seed, cfg.validate_z)?;
    let mut csv = String::from("index,geometry,quantity,source,formula,formula_im,oracle,oracle_im,se,z,required,pass\n");
    for (i, c) in rep.checks.iter().enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.geometry, c.quantity, c.source, c.formula, c.formula_im, c.oracle, c.oracle_im, c.se, c.z, c.required, c.pass
        ));
    }
    let required = rep.checks.iter().filter(|c| c.required).count();
    let failed = rep.required_failures().len();
    let mut flagged: Vec<String> = rep.flagged().iter().map(|c| format!("{}/{}", c.quantity, c.source)).collect();
    flagged.sort();
    flagged.dedup();
    let summary = json!({
        "passed": rep.passed(),
        "required_checks": required,
        "required_failures": failed,
        "flagged": flagged,
        "geometries": rep.geometries,
        "draws": rep.draws,
        "z_threshold": rep.z_threshold,
    });
    Ok(Outcome {
        experiment: "validate",
        artifacts: vec![Artifact { stem: "validate".into(), csv, summary }],
        line: format!(
            "{} required checks, {failed} failed; flagged closed forms: {}",
            required,
            if flagged.is_empty() { "none".to_string() } else { flagged.join(" ") }
        ),
        validation_failed: !rep.passed(),
    })
}

/// The layout of drop 0: node table as CSV, full geometry in the sidecar.
pub fn geometry(cfg: &SimulationConfig) -> Result<Outcome> {
    let (geom, links) = place(cfg, cfg.n_aps, cfg.n_antennas, cfg.n_ues, 0)?;
    let mut csv = String::from("kind,index,x_km,y_km,height_m\n");
    for (i, a) in geom.aps.iter().enumerate() {
        csv.push_str(&format!("ap,{i},{},{},{}\n", a.x_km, a.y_km, a.height_m));
    }
    for (i, u) in geom.ues.iter().enumerate() {
        csv.push_str(&format!("ue,{i},{},{},{}\n", u.x_km, u.y_km, u.height_m));
    }
    let mean_p = links.links.iter().map(|l| l.p_los).sum::<f64>() / links.links.len() as f64;
    Ok(Outcome {
        experiment: "geometry",
        artifacts: vec![Artifact { stem: "geometry".into(), csv, summary: json!({ "geometry": geom, "mean_los_probability": mean_p }) }],
        line: format!("{} APs, {} UEs, mean LoS probability {mean_p:.3}", cfg.n_aps, cfg.n_ues),
        validation_failed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig { n_aps: 16, n_ues: 3, trials: 8, drops: 2, snr_db: vec![40.0, 60.0], m_list: vec![16, 32], ..Default::default() }
    }

    #[test]
    fn no_blockages_put_all_mass_on_m() {
        let cfg = SimulationConfig { mu_per_km2: 0.0, ..small() };
        let o = pmf_los(&cfg).unwrap();
        for (a, m) in o.artifacts.iter().zip([16, 32]) {
            let last = a.csv.lines().last().unwrap();
            assert!(last.starts_with(&format!("{m},1,0")), "{last}");
            assert_eq!(a.summary["p_at_least_one"], 1.0);
        }
    }

    #[test]
    fn rates_table_has_bounds_for_every_series() {
        let o = rates(&small()).unwrap();
        let header = o.artifacts[0].csv.lines().next().unwrap().to_string();
        for s in ["conj_acc", "conj_est", "joint_acc_approx", "joint_est_lower"] {
            assert!(header.contains(&format!(",{s},{s}_se")), "{header}");
        }
    }

    #[test]
    fn budget_guard_refuses_large_runs() {
        let cfg = SimulationConfig { budget: 10.0, ..small() };
        assert!(matches!(rates(&cfg), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn empty_ap_configuration_has_zero_rate() {
        let cfg = SimulationConfig { ap_configs: vec![(0, 4), (8, 1)], ..small() };
        let o = sweep_ap(&cfg).unwrap();
        let row: Vec<&str> = o.artifacts[0].csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row, ["0", "0", "0", "0", "0"]);
    }

    #[test]
    fn single_ue_sweep_schemes_coincide() {
        let cfg = SimulationConfig { k_list: vec![1], trials: 100, ..small() };
        let o = sweep_k(&cfg).unwrap();
        let row: Vec<f64> = o.artifacts[0].csv.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        let (conj, conj_se, mmse, mmse_se) = (row[1], row[2], row[3], row[4]);
        assert!((conj - mmse).abs() <= 3.0 * (conj_se.powi(2) + mmse_se.powi(2)).sqrt() + 1e-6 * conj);
    }
}
