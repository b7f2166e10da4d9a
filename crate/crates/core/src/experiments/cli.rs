//! Command-line front end.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use super::config::SimulationConfig;
use super::output::write_csv_with_sidecar;
use super::runs::{self, Outcome};
use crate::analytics::empirical::Scheme;
use crate::analytics::exact::CsiMode;
use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cellfree", version, about = "Cell-free massive MIMO uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Emit the layout of one drop.
    Geometry(RunArgs),
    /// PMF of the number of LoS links per UE.
    PmfLos(RunArgs),
    /// Sum rate and bounds versus data SNR.
    Rates(RunArgs),
    /// CDF of per-UE SIR (conjugate) or SINR (MMSE).
    Cdf(RunArgs),
    /// Conjugate, MMSE and joint detection side by side.
    Compare(RunArgs),
    /// Per-user rate versus the number of UEs.
    SweepK(RunArgs),
    /// Sum rate versus AP configuration at fixed antenna count.
    SweepAp(RunArgs),
    /// Closed-form gain statistics versus Monte-Carlo oracles.
    Validate(RunArgs),
}

fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if f >= 0.0 && f.fract() == 0.0 && f <= 1e15 {
        Ok(f as usize)
    } else {
        Err(format!("`{s}` is not a whole non-negative number"))
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "conj" | "conjugate" => Ok(Scheme::Conjugate),
        "joint" => Ok(Scheme::Joint),
        "mmse" => Ok(Scheme::Mmse),
        _ => Err(format!("unknown scheme `{s}` (conj, joint, mmse)")),
    }
}

fn parse_csi(s: &str) -> Result<CsiMode, String> {
    match s {
        "acc" | "accurate" => Ok(CsiMode::Accurate),
        "est" | "estimated" => Ok(CsiMode::Estimated),
        _ => Err(format!("unknown CSI mode `{s}` (acc, est)")),
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_count)]
    trials: Option<usize>,
    #[arg(long, value_parser = parse_count)]
    drops: Option<usize>,
    /// AP count, or a comma-separated list for `pmf-los`.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<usize>>,
    #[arg(long)]
    n: Option<usize>,
    /// UE count, or a comma-separated list for `sweep-k`.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Data SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_csi)]
    csi: Option<Vec<CsiMode>>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Full network size (M = 1024, K = 64).
    #[arg(long = "paper-scale")]
    full_scale: bool,
    /// Single-threaded run for byte-level regression comparisons.
    #[arg(long)]
    regression: bool,
}

impl RunArgs {
    fn resolve(&self, list_m: bool, list_k: bool) -> Result<SimulationConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => SimulationConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => SimulationConfig::default(),
        };
        if self.full_scale {
            cfg.apply_full_scale();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.drops {
            cfg.drops = v;
        }
        if let Some(v) = &self.m {
            if list_m {
                cfg.m_list = v.clone();
            } else {
                cfg.n_aps = single(v, "--m")?;
            }
        }
        if let Some(v) = self.n {
            cfg.n_antennas = v;
        }
        if let Some(v) = &self.k {
            if list_k {
                cfg.k_list = v.clone();
            } else {
                cfg.n_ues = single(v, "--k")?;
            }
        }
        if let Some(v) = &self.snr {
            cfg.snr_db = v.clone();
        }
        if let Some(v) = &self.schemes {
            cfg.schemes = v.clone();
        }
        if let Some(v) = &self.csi {
            cfg.csi = v.clone();
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = Some(v);
        }
        if self.regression {
            cfg.threads = Some(1);
        }
        if let Some(p) = &self.out {
            cfg.out = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn single(v: &[usize], flag: &str) -> Result<usize, Error> {
    match v {
        [x] => Ok(*x),
        _ => Err(Error::InvalidConfig(format!("{flag} takes a single value for this experiment"))),
    }
}

fn run(command: &Command) -> Result<Outcome, (i32, String)> {
    let (args, list_m, list_k): (&RunArgs, bool, bool) = match command {
        Command::PmfLos(a) => (a, true, false),
        Command::SweepK(a) => (a, false, true),
        Command::Geometry(a) | Command::Rates(a) | Command::Cdf(a) | Command::Compare(a) | Command::SweepAp(a) | Command::Validate(a) => (a, false, false),
    };
    let cfg = args.resolve(list_m, list_k).map_err(classify)?;
    let out = cfg.out.clone().ok_or((EXIT_USAGE, "missing output directory (--out or \"out\" in the config)".to_string()))?;
    let job = || match command {
        Command::Geometry(_) => runs::geometry(&cfg),
        Command::PmfLos(_) => runs::pmf_los(&cfg),
        Command::Rates(_) => runs::rates(&cfg),
        Command::Cdf(_) => runs::cdf(&cfg),
        Command::Compare(_) => runs::compare(&cfg),
        Command::SweepK(_) => runs::sweep_k(&cfg),
        Command::SweepAp(_) => runs::sweep_ap(&cfg),
        Command::Validate(_) => runs::validate(&cfg),
    };
    let outcome = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| (EXIT_FAILURE, format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
    .map_err(classify)?;
    for a in &outcome.artifacts {
        write_csv_with_sidecar(&out, &a.stem, outcome.experiment, &a.csv, &cfg, &a.summary).map_err(classify)?;
    }
    Ok(outcome)
}

fn classify(e: Error) -> (i32, String) {
    let code = match e {
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::InvalidConfig(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    };
    (code, e.to_string())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    match run(&cli.command) {
        Ok(o) => {
            println!("{}: {} [{:.1} s]", o.experiment, o.line, start.elapsed().as_secs_f64());
            if o.validation_failed {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            }
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}
