//! Command-line definitions and `--config` file handling.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fembv_gpd::data_model::{DEFAULT_EPSILON, DEFAULT_QUANTILE_LEVEL};
use fembv_gpd::diagnostics::EsMode;
use fembv_gpd::{AnnealerSettings, ModelConfig};

use crate::io::InputError;

pub const LONG_VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (file format version 1)");

#[derive(Debug, Parser)]
#[command(
    name = "fembv-gpd",
    version,
    long_version = LONG_VERSION,
    about = "Regime-switching GPD regression for threshold excesses",
    args_override_self = true
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "FEMBV_GPD_THREADS")]
    pub threads: Option<usize>,

    /// File of `key=value` lines used as defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Threshold raw series into excesses.
    Extract(ExtractArgs),
    /// Fit one (K, C, lambda) configuration.
    Fit(FitArgs),
    /// Fit a configuration grid and pick the minimal-AICc cell.
    Select(SelectArgs),
    /// Residual QQ table and standard errors of a fit.
    Diagnose(DiagnoseArgs),
    /// Event-synchronization matrix.
    Es(EsArgs),
    /// Generate a synthetic panel with known regimes.
    Simulate(SimulateArgs),
    /// Re-run the invocation recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Extract(_) => "extract",
            Command::Fit(_) => "fit",
            Command::Select(_) => "select",
            Command::Diagnose(_) => "diagnose",
            Command::Es(_) => "es",
            Command::Simulate(_) => "simulate",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out_dir(&self) -> &Path {
        match self {
            Command::Extract(a) => &a.out,
            Command::Fit(a) => &a.out,
            Command::Select(a) => &a.out,
            Command::Diagnose(a) => &a.out,
            Command::Es(a) => &a.out,
            Command::Simulate(a) => &a.out,
            Command::Replay(a) => a.out.as_deref().unwrap_or(Path::new(".")),
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Extract(a) => a.out = dir,
            Command::Fit(a) => a.out = dir,
            Command::Select(a) => a.out = dir,
            Command::Diagnose(a) => a.out = dir,
            Command::Es(a) => a.out = dir,
            Command::Simulate(a) => a.out = dir,
            Command::Replay(a) => a.out = Some(dir),
        }
    }

    /// Rewrites every path argument as an absolute path so that a recorded
    /// invocation can be replayed from any directory.
    pub fn absolutize(&mut self) -> Result<()> {
        fn abs(p: &mut PathBuf) -> Result<()> {
            *p = std::path::absolute(&*p)?;
            Ok(())
        }
        fn data(d: &mut DataArgs) -> Result<()> {
            abs(&mut d.excesses)?;
            if let Some(c) = d.covariates.as_mut() {
                abs(c)?;
            }
            Ok(())
        }
        match self {
            Command::Extract(a) => {
                abs(&mut a.input)?;
                abs(&mut a.out)
            }
            Command::Fit(a) => {
                data(&mut a.data)?;
                abs(&mut a.out)
            }
            Command::Select(a) => {
                data(&mut a.data)?;
                abs(&mut a.out)
            }
            Command::Diagnose(a) => {
                data(&mut a.data)?;
                abs(&mut a.fit)?;
                if let Some(p) = a.paths.as_mut() {
                    abs(p)?;
                }
                abs(&mut a.out)
            }
            Command::Es(a) => {
                abs(&mut a.input)?;
                abs(&mut a.out)
            }
            Command::Simulate(a) => {
                if let Some(p) = a.scenario.as_mut() {
                    abs(p)?;
                }
                abs(&mut a.out)
            }
            Command::Replay(a) => {
                abs(&mut a.manifest)?;
                if let Some(p) = a.out.as_mut() {
                    abs(p)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ExtractArgs {
    /// Raw series CSV (`location,time,value`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_QUANTILE_LEVEL)]
    pub quantile: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DataArgs {
    /// Excess CSV (`location,time,excess`).
    #[arg(long)]
    pub excesses: PathBuf,
    /// Covariate CSV (`location,time,<names...>`); omit for offsets only.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Covariates shared by all locations (scaled to [-1, 1]).
    #[arg(long, value_delimiter = ',')]
    pub global: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = 50)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop when the penalized NLL changes by less than this.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long = "max-ao", default_value_t = 1000)]
    pub max_ao: usize,
    /// Annealing proposals per regime and coefficient step.
    #[arg(long, default_value_t = AnnealerSettings::default().n_steps)]
    pub anneal_steps: usize,
    /// Objective evaluations of the final compass search.
    #[arg(long, default_value_t = AnnealerSettings::default().polish_evaluations)]
    pub polish_evaluations: usize,
    /// Leave the intercepts out of the L1 penalty.
    #[arg(long)]
    pub unpenalized_offsets: bool,
}

impl OptimizerArgs {
    pub fn model_config(&self, k: usize, c: usize, lambda: f64) -> ModelConfig {
        ModelConfig {
            restarts: self.restarts,
            seed: self.seed,
            ao_tolerance: self.tol,
            max_ao_iterations: self.max_ao,
            penalize_offsets: !self.unpenalized_offsets,
            annealer: AnnealerSettings {
                n_steps: self.anneal_steps,
                polish_evaluations: self.polish_evaluations,
                ..AnnealerSettings::default()
            },
            ..ModelConfig::new(k, c, lambda)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of regimes.
    #[arg(long = "K", visible_alias = "k")]
    pub k: usize,
    /// Maximum regime switches per location.
    #[arg(long = "C", visible_alias = "c")]
    pub c: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "K-grid", visible_alias = "k-grid", value_delimiter = ',', required = true)]
    pub k_grid: Vec<usize>,
    #[arg(long = "C-grid", visible_alias = "c-grid", value_delimiter = ',', required = true)]
    pub c_grid: Vec<usize>,
    #[arg(long = "lambda-grid", value_delimiter = ',', default_value = "0")]
    pub lambda_grid: Vec<f64>,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct DiagnoseArgs {
    /// `fit.json` written by `fit` or `select`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Paths CSV; defaults to `paths.csv` next to the fit file.
    #[arg(long)]
    pub paths: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long = "n-boot", default_value_t = 500)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EsArgs {
    /// `paths.csv` (any mode) or an excess CSV (stationary mode only).
    #[arg(long)]
    pub input: PathBuf,
    /// `stationary` or `cluster:<regime>` (regimes numbered from 1).
    #[arg(long, default_value = "stationary", value_parser = parse_mode)]
    pub mode: EsModeArg,
    /// Cap on the synchronization window; `inf` for none.
    #[arg(long = "tau-max", default_value_t = f64::INFINITY)]
    #[serde(with = "extended_float")]
    pub tau_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// ES mode as given on the command line (cluster numbered from 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EsModeArg {
    Stationary,
    Cluster(usize),
}

impl EsModeArg {
    pub fn to_mode(self) -> EsMode {
        match self {
            EsModeArg::Stationary => EsMode::Stationary,
            EsModeArg::Cluster(k) => EsMode::Cluster(k - 1),
        }
    }
}

fn parse_mode(s: &str) -> Result<EsModeArg, String> {
    if s == "stationary" {
        return Ok(EsModeArg::Stationary);
    }
    match s.strip_prefix("cluster:").map(str::parse::<usize>) {
        Some(Ok(k)) if k >= 1 => Ok(EsModeArg::Cluster(k)),
        _ => Err(format!("expected 'stationary' or 'cluster:<k>' with k >= 1, got '{s}'")),
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Full scenario as JSON; replaces the recovery scenario and the flags
    /// below.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub locations: usize,
    #[arg(long, default_value_t = 400)]
    pub length: usize,
    #[arg(long, default_value_t = 6)]
    pub switches: usize,
    /// Additional uniform local covariates with zero coefficients.
    #[arg(long = "noise-covariates", default_value_t = 0)]
    pub noise_covariates: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// `manifest.json` of an earlier run.
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Serializes infinite values as the strings `"inf"` / `"-inf"`, which plain
/// JSON numbers cannot represent.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

const SUBCOMMANDS: [&str; 7] = ["extract", "fit", "select", "diagnose", "es", "simulate", "replay"];

/// Inserts the `key=value` pairs of a `--config` file right after the
/// subcommand, so flags given on the command line take precedence.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut config_path = None;
    let mut iter = args.iter().enumerate().skip(1);
    while let Some((_, a)) = iter.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            config_path = iter.next().map(|(_, p)| p.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let Some(sub) = args.iter().skip(1).position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| InputError(format!("cannot read config {path}: {e}")))?;
    let mut injected = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!(InputError(format!("{path}: line {}: expected key=value", i + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            bail!(InputError(format!("{path}: line {}: config files cannot nest", i + 1)));
        }
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => injected.push(format!("--{key}={value}")),
        }
    }
    let at = sub + 2;
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn parses_fit_flags() {
        let cli =
            Cli::try_parse_from(argv("fembv-gpd fit --excesses e.csv --K 2 --C 10 --lambda 0.5 --out o")).unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        assert_eq!((f.k, f.c, f.lambda), (2, 10, 0.5));
        assert_eq!(f.optimizer.restarts, 50);
        assert!(f.data.covariates.is_none());
    }

    #[test]
    fn parses_grids_and_modes() {
        let cli = Cli::try_parse_from(argv(
            "fembv-gpd select --excesses e.csv --K-grid 1,2,3 --C-grid 5,10 --lambda-grid 0,0.1 --out o",
        ))
        .unwrap();
        let Command::Select(s) = cli.command else { panic!() };
        assert_eq!(s.k_grid, vec![1, 2, 3]);
        assert_eq!(s.lambda_grid, vec![0.0, 0.1]);
        assert_eq!(parse_mode("cluster:2"), Ok(EsModeArg::Cluster(2)));
        assert!(parse_mode("cluster:0").is_err());
        assert!(parse_mode("blob").is_err());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "# defaults\nrestarts = 7\nseed=3\nunpenalized-offsets=true\n").unwrap();
        let args = argv(&format!(
            "fembv-gpd --config {} fit --excesses e.csv --K 1 --C 0 --seed 9 --out o",
            cfg.display()
        ));
        let cli = Cli::try_parse_from(expand_config(args).unwrap()).unwrap();
        let Command::Fit(f) = cli.command else { panic!() };
        assert_eq!(f.optimizer.restarts, 7);
        assert_eq!(f.optimizer.seed, 9);
        assert!(f.optimizer.unpenalized_offsets);
    }

    #[test]
    fn bad_config_line_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        fs::write(&cfg, "restarts 7\n").unwrap();
        let args = argv(&format!("fembv-gpd fit --config {} --out o", cfg.display()));
        let err = expand_config(args).unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
