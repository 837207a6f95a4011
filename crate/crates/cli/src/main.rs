use std::path::PathBuf;
use std::process::ExitCode;

use adsim_cli::{emit_report, read_config, read_json, CliError, Manifest, OutputDir};
use adsim_core::auction::Mechanism;
use adsim_core::datagen::build_dataset;
use adsim_core::datagen::io::{write_advertisers, write_instances};
use adsim_core::engine::{aggregate_reports, run_experiment, run_seed, Cell, EngineError, ExperimentResult, RunReport, SimulationConfig};
use anyhow::Context;
use clap::{Args, Parser, Subcommand};

/// Position-auction simulator with ROI-constrained autobidders.
#[derive(Parser, Debug)]
#[command(name = "adsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the datasets of every run as CSV.
    Generate(Common),
    /// Simulate one cell (mechanism, reserve, level) over all runs.
    Run(Common),
    /// Simulate the experiment grid and aggregate it against the benchmark.
    Experiment(Common),
    /// Re-aggregate the run reports in an output directory.
    Report(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config; defaults are used for anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    mechanism: Option<Mechanism>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    reserve: Option<bool>,
    #[arg(long)]
    runs: Option<usize>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    /// Loads the config and applies overrides. For experiments, `--mechanism`,
    /// `--level` and `--reserve` narrow the grid to that value.
    fn resolve(&self, experiment: bool) -> Result<(SimulationConfig, Vec<String>), CliError> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => SimulationConfig::default(),
        };
        let mut overrides = Vec::new();
        if let Some(s) = self.seed {
            cfg.seed = s;
            overrides.push(format!("--seed {s}"));
        }
        if let Some(m) = self.mechanism {
            cfg.mechanism = m;
            if experiment {
                cfg.experiment.mechanisms = vec![m];
            }
            overrides.push(format!("--mechanism {m}"));
        }
        if let Some(l) = self.level {
            cfg.level = l;
            if experiment {
                cfg.experiment.levels = vec![l];
            }
            overrides.push(format!("--level {l}"));
        }
        if let Some(r) = self.reserve {
            cfg.reserve = r;
            if experiment {
                cfg.experiment.reserves = vec![r];
            }
            overrides.push(format!("--reserve {r}"));
        }
        if let Some(n) = self.runs {
            cfg.runs = n;
            overrides.push(format!("--runs {n}"));
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
            overrides.push(format!("--threads {t}"));
        }
        cfg.validate()?;
        Ok((cfg, overrides))
    }

    fn manifest(&self, subcommand: &str, cfg: &SimulationConfig, overrides: Vec<String>) -> Manifest {
        Manifest {
            subcommand: subcommand.to_string(),
            config_path: self.config.as_ref().map(|p| p.display().to_string()),
            out: self.out.display().to_string(),
            overrides,
            config: adsim_cli::config_to_toml(cfg),
            paired_datasets: true,
            methods: adsim_cli::default_methods(),
            files: Vec::new(),
        }
    }
}

fn pool(threads: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().context("starting worker threads")
}

fn generate(args: &Common) -> anyhow::Result<()> {
    let (cfg, overrides) = args.resolve(false)?;
    let mut out = OutputDir::create(&args.out)?;
    for r in 0..cfg.runs {
        let ds = build_dataset(&cfg.dataset_config(cfg.reserve), run_seed(cfg.seed, r)).map_err(|e| CliError::from(EngineError::from(e)))?;
        let mut buf = Vec::new();
        write_advertisers(&mut buf, &ds.advertisers)?;
        out.write(&format!("run_{r}/advertisers.csv"), &buf)?;
        buf.clear();
        write_instances(&mut buf, &ds.instances)?;
        out.write(&format!("run_{r}/instances.csv"), &buf)?;
        println!("run {r}: {} auctions, digest {}", ds.instances.len(), ds.digest());
    }
    out.finish(args.manifest("generate", &cfg, overrides))?;
    Ok(())
}

fn summarize(result: &ExperimentResult) {
    println!("{:<5} {:<7} {:>5} {:>22} {:>22} {:>8} {:>8}", "mech", "reserve", "level", "profit %", "welfare %", "bid mul", "strength");
    for r in &result.table {
        println!(
            "{:<5} {:<7} {:>5} {:>+8.2} [{:+.2},{:+.2}] {:>+8.2} [{:+.2},{:+.2}] {:>8.3} {:>8.4}",
            r.mechanism.to_string(),
            r.reserve,
            r.level,
            r.profit_delta_pct.mean,
            r.profit_delta_pct.ci_lo,
            r.profit_delta_pct.ci_hi,
            r.welfare_delta_pct.mean,
            r.welfare_delta_pct.ci_lo,
            r.welfare_delta_pct.ci_hi,
            r.bid_multiplier.mean,
            r.strength.mean
        );
    }
}

fn experiment(args: &Common, single: bool) -> anyhow::Result<()> {
    let (mut cfg, overrides) = args.resolve(!single)?;
    if single {
        let cell = cfg.cell();
        cfg.experiment.mechanisms = vec![cell.mechanism];
        cfg.experiment.levels = vec![cell.level];
        cfg.experiment.reserves = vec![cell.reserve];
        cfg.experiment.benchmark = cell;
    }
    let result = pool(cfg.threads)?.install(|| run_experiment(&cfg)).map_err(CliError::from)?;
    summarize(&result);
    let mut out = OutputDir::create(&args.out)?;
    emit_report(&result, &cfg, &mut out)?;
    out.finish(args.manifest(if single { "run" } else { "experiment" }, &cfg, overrides))?;
    Ok(())
}

fn report(args: &Common) -> anyhow::Result<()> {
    let config = args.config.clone().unwrap_or_else(|| args.out.join("config.toml"));
    let args = Common { config: Some(config), ..args.clone() };
    let (cfg, overrides) = args.resolve(true)?;
    let reports: Vec<RunReport> = read_json(&args.out.join("runs.json"))?;
    let mut cells: Vec<Cell> = Vec::new();
    for r in &reports {
        if !cells.contains(&r.cell) {
            cells.push(r.cell);
        }
    }
    let benchmark = cfg.experiment.benchmark;
    let table = aggregate_reports(&cells, benchmark, &reports).map_err(CliError::from)?;
    let result = ExperimentResult { cells, benchmark, reports, table };
    summarize(&result);
    let mut out = OutputDir::create(&args.out)?;
    emit_report(&result, &cfg, &mut out)?;
    out.finish(args.manifest("report", &cfg, overrides))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => experiment(a, true),
        Command::Experiment(a) => experiment(a, false),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.downcast_ref::<CliError>().map_or(3, CliError::exit_code) as u8)
        }
    }
}
