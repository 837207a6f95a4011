//! Config parsing and report emission for the `adsim` binary.
//!
//! Configs are TOML files whose keys mirror [`SimulationConfig`]; anything
//! left out takes its default and unknown keys are rejected. Reports are CSV
//! with a JSON twin per table, plus a manifest listing SHA-256 digests of
//! everything written.

use std::fs;
use std::path::{Path, PathBuf};

use adsim_core::datagen::io::format_f64;
use adsim_core::engine::{EngineError, ExperimentResult, RunReport, SimulationConfig};
use adsim_core::metrics::AggregateRow;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TABLE_HEADER: &str = "mechanism,reserve,level,profit_delta_pct,profit_ci_lo,profit_ci_hi,welfare_delta_pct,welfare_ci_lo,welfare_ci_hi,bidmul_mean,bidmul_ci_lo,bidmul_ci_hi,strength_mean";
pub const TRAJECTORY_HEADER: &str = "mechanism,reserve,level,run,iteration,relative_margin,roi,strength";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Engine(EngineError),
}

impl CliError {
    /// 2 for anything the user can fix in the config, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(EngineError::Config(_) | EngineError::BenchmarkMissing(_)) => 2,
            _ => 3,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(msg) => CliError::Config(msg),
            e => CliError::Engine(e),
        }
    }
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Parses and validates a config. Constraint violations point at the line
/// that set the offending key when there is one.
pub fn parse_config(text: &str) -> Result<SimulationConfig, CliError> {
    let cfg: SimulationConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
    if let Err(e) = cfg.validate() {
        let msg = match e {
            EngineError::Config(m) => m,
            other => other.to_string(),
        };
        let key = msg.split_whitespace().next().unwrap_or("");
        let key = key.rsplit('.').next().unwrap_or(key);
        let located = line_of(text, key).or_else(|| line_of(text, &format!("{key}s")));
        return Err(CliError::Config(match located {
            Some(line) => format!("line {line}: {msg}"),
            None => msg,
        }));
    }
    Ok(cfg)
}

/// The resolved config as TOML; parsing it back gives the same config.
pub fn config_to_toml(cfg: &SimulationConfig) -> String {
    toml::to_string(cfg).expect("configs always serialize")
}

pub fn table_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in rows {
        let e = |x: f64| format_f64(x);
        let cols = [
            r.mechanism.to_string(),
            r.reserve.to_string(),
            r.level.to_string(),
            e(r.profit_delta_pct.mean),
            e(r.profit_delta_pct.ci_lo),
            e(r.profit_delta_pct.ci_hi),
            e(r.welfare_delta_pct.mean),
            e(r.welfare_delta_pct.ci_lo),
            e(r.welfare_delta_pct.ci_hi),
            e(r.bid_multiplier.mean),
            e(r.bid_multiplier.ci_lo),
            e(r.bid_multiplier.ci_hi),
            e(r.strength.mean),
        ];
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(reports: &[RunReport]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for row in reports.iter().flat_map(|r| &r.trajectory) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.mechanism,
            row.reserve,
            row.level,
            row.run,
            row.iteration,
            format_f64(row.relative_margin),
            format_f64(row.roi),
            format_f64(row.strength)
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedFile {
    pub name: String,
    pub sha256: String,
}

/// What produced an output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub out: String,
    /// Command-line overrides in the order given, e.g. `--seed 7`.
    pub overrides: Vec<String>,
    /// Resolved config, TOML.
    pub config: String,
    /// Whether every cell of a run shares that run's dataset.
    pub paired_datasets: bool,
    /// How the reported statistics are computed.
    pub methods: Vec<String>,
    pub files: Vec<EmittedFile>,
}

/// Descriptions of the estimators behind `table.csv`, for [`Manifest::methods`].
pub fn default_methods() -> Vec<String> {
    [
        "deltas: per-run paired (cell - benchmark) / benchmark in percent, same dataset per run",
        "ci: mean +- 1.96 * sample sd / sqrt(runs)",
        "bid multiplier: spend-weighted mean of per-bidder geometric means over active partitions",
        "strength: spend-weighted mean of per-bidder mean |log k_d - mean log k|",
        "roi: total value / total spend",
    ]
    .map(String::from)
    .to_vec()
}

/// Collects files for one output directory and records their digests.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<EmittedFile>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<OutputDir, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(OutputDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.files.push(EmittedFile { name: name.to_string(), sha256: hex::encode(Sha256::digest(bytes)) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json { path, source })?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        manifest.files = self.files.clone();
        self.write_json("manifest.json", &manifest)?;
        Ok(manifest)
    }
}

/// Writes tables, trajectories and run reports of an experiment.
pub fn emit_report(result: &ExperimentResult, cfg: &SimulationConfig, out: &mut OutputDir) -> Result<(), CliError> {
    out.write("config.toml", config_to_toml(cfg).as_bytes())?;
    out.write("table.csv", table_csv(&result.table).as_bytes())?;
    out.write_json("table.json", &result.table)?;
    out.write("trajectory.csv", trajectory_csv(&result.reports).as_bytes())?;
    let rows: Vec<_> = result.reports.iter().flat_map(|r| &r.trajectory).collect();
    out.write_json("trajectory.json", &rows)?;
    out.write_json("runs.json", &result.reports)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

pub fn read_config(path: &Path) -> Result<SimulationConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        e => e,
    })
}
