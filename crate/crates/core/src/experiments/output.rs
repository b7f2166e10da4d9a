//! CSV tables and their JSON sidecars.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::SimulationConfig;
use crate::error::{Error, Result};

/// A y-series with per-point standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesOut {
    pub name: String,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub x_label: String,
    pub x: Vec<f64>,
    pub series: Vec<SeriesOut>,
    pub config_hash: String,
    pub seed: u64,
}

impl ExperimentResult {
    pub fn new(experiment: &str, x_label: &str, x: Vec<f64>, cfg: &SimulationConfig) -> Self {
        Self { experiment: experiment.into(), x_label: x_label.into(), x, series: Vec::new(), config_hash: cfg.hash(), seed: cfg.seed }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>, se: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.x.len() || se.len() != self.x.len() {
            return Err(Error::ContractViolation(format!("series {name} length does not match x")));
        }
        if se.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::ContractViolation(format!("series {name} has a negative or NaN standard error")));
        }
        self.series.push(SeriesOut { name, values, se });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&SeriesOut> {
        self.series.iter().find(|s| s.name == name)
    }

    /// `x,<s1>,<s1>_se,<s2>,<s2>_se,...`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x");
        for s in &self.series {
            let _ = write!(out, ",{},{}_se", s.name, s.name);
        }
        out.push('\n');
        for (i, x) in self.x.iter().enumerate() {
            let _ = write!(out, "{x}");
            for s in &self.series {
                let _ = write!(out, ",{},{}", s.values[i], s.se[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// Git-style object digest: SHA-256 of `"blob <len>\0" + content`.
pub fn content_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct Sidecar<'a, S: Serialize> {
    experiment: &'a str,
    csv: String,
    csv_digest: String,
    config_hash: String,
    seed: u64,
    config: &'a SimulationConfig,
    summary: &'a S,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the CSV path.
pub fn write_csv_with_sidecar<S: Serialize>(dir: &Path, stem: &str, experiment: &str, csv: &str, cfg: &SimulationConfig, summary: &S) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, csv.as_bytes())?;
    let side = Sidecar {
        experiment,
        csv: format!("{stem}.csv"),
        csv_digest: content_digest(csv.as_bytes()),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg,
        summary,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&side)? + "\n")?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let cfg = SimulationConfig::default();
        let mut r = ExperimentResult::new("t", "snr", vec![0.0, 5.5], &cfg);
        r.push("a", vec![1.0, 2.0], vec![0.1, 0.0]).unwrap();
        assert_eq!(r.to_csv(), "x,a,a_se\n0,1,0.1\n5.5,2,0\n");
        assert!(r.push("b", vec![1.0], vec![0.0]).is_err());
        assert!(r.push("c", vec![1.0, 1.0], vec![-1.0, 0.0]).is_err());
    }

    #[test]
    fn digest_matches_git_blob_format() {
        // `git hash-object --object-format=sha256` of an empty file
        assert_eq!(content_digest(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn sidecar_is_written_next_to_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimulationConfig::default();
        let p = write_csv_with_sidecar(dir.path(), "t", "test", "x\n1\n", &cfg, &serde_json::json!({"k": 1})).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "x\n1\n");
        let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
        assert_eq!(side["config_hash"], cfg.hash());
        assert_eq!(side["summary"]["k"], 1);
    }
}
