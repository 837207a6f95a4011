//! Bidding rounds, single runs and experiment grids.

mod config;

pub use config::{Cell, CurveMode, ExperimentGrid, SimulationConfig, UpdateMode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_auction_with, AuctionOutcome, GspNextRule, Mechanism};
use crate::bidding::{best_response, BiddingError, BidProfile, Discretization, EtaSchedule, MarketView, UniformUpdate};
use crate::datagen::{build_dataset, DatagenError, Dataset};
use crate::metrics::{self, aggregate, AggregateRow, BidderLedger, MetricRow, MetricsError};
use crate::rng::{Purpose, StreamSeed};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("benchmark cell {0:?} is not part of the experiment grid")]
    BenchmarkMissing(Cell),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Bidding(#[from] BiddingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Seed of run `r` under a master seed.
pub fn run_seed(master: u64, run: usize) -> StreamSeed {
    StreamSeed::new(master).derive(Purpose::Run, run as u64)
}

/// A dataset plus the per-candidate lookups every round needs.
#[derive(Clone, Debug)]
pub struct Market {
    pub dataset: Dataset,
    /// `v · tCPA` per candidate: the bid at multiplier 1 and the scaled value.
    pub scaled: Vec<Vec<f64>>,
    /// `(auction, candidate)` positions of each advertiser, in auction order.
    pub entries: Vec<Vec<(usize, usize)>>,
}

impl Market {
    pub fn new(dataset: Dataset) -> Market {
        let mut entries = vec![Vec::new(); dataset.advertisers.len()];
        let scaled = dataset
            .instances
            .iter()
            .enumerate()
            .map(|(q, inst)| {
                inst.candidates
                    .iter()
                    .enumerate()
                    .map(|(c, cand)| {
                        entries[cand.advertiser as usize].push((q, c));
                        cand.value * dataset.advertisers[cand.advertiser as usize].tcpa
                    })
                    .collect()
            })
            .collect();
        Market { dataset, scaled, entries }
    }

    pub fn num_advertisers(&self) -> usize {
        self.dataset.advertisers.len()
    }

    pub fn partition_of(&self, level: usize, q: usize) -> usize {
        self.dataset.family.cell_of(level, q)
    }

    /// Whether each advertiser appears in any auction of each partition.
    pub fn participation(&self, level: usize) -> Vec<Vec<bool>> {
        let parts = self.dataset.family.num_sets(level);
        self.entries
            .iter()
            .map(|e| {
                let mut p = vec![false; parts];
                for &(q, _) in e {
                    p[self.partition_of(level, q)] = true;
                }
                p
            })
            .collect()
    }

    /// Bids of every candidate under `profile`.
    pub fn bids(&self, profile: &BidProfile) -> Vec<Vec<f64>> {
        self.dataset
            .instances
            .iter()
            .enumerate()
            .map(|(q, inst)| {
                let d = self.partition_of(profile.level, q);
                inst.candidates
                    .iter()
                    .zip(&self.scaled[q])
                    .map(|(cand, a)| profile.kappas[cand.advertiser as usize][d] * a)
                    .collect()
            })
            .collect()
    }

    pub fn outcomes(&self, mechanism: Mechanism, rule: GspNextRule, bids: &[Vec<f64>]) -> Vec<AuctionOutcome> {
        self.dataset
            .instances
            .par_iter()
            .zip(bids)
            .map(|(inst, b)| run_auction_with(mechanism, rule, inst, b))
            .collect()
    }

    /// Per-advertiser totals, summed in auction order.
    pub fn ledger(&self, outcomes: &[AuctionOutcome]) -> Vec<BidderLedger> {
        let mut ledger = vec![BidderLedger::default(); self.num_advertisers()];
        for (q, (inst, out)) in self.dataset.instances.iter().zip(outcomes).enumerate() {
            for &c in &out.winners {
                let cand = &inst.candidates[c];
                let l = &mut ledger[cand.advertiser as usize];
                l.value += self.scaled[q][c] * out.allocation[c];
                l.spend += out.payment[c];
                l.cost += cand.cost * out.allocation[c];
            }
        }
        ledger
    }

    fn bidder_totals(&self, i: usize, outcomes: &[AuctionOutcome]) -> (f64, f64) {
        self.entries[i].iter().fold((0.0, 0.0), |(v, s), &(q, c)| {
            (v + self.scaled[q][c] * outcomes[q].allocation[c], s + outcomes[q].payment[c])
        })
    }
}

/// Everything a round needs besides the market and the profile.
#[derive(Clone, Debug)]
pub struct RoundSettings {
    pub mechanism: Mechanism,
    pub rule: GspNextRule,
    pub eta: EtaSchedule,
    pub uniform: UniformUpdate,
    pub damping: bool,
    pub update: UpdateMode,
    pub discretization: Discretization,
}

impl RoundSettings {
    pub fn new(config: &SimulationConfig, mechanism: Mechanism) -> RoundSettings {
        RoundSettings {
            mechanism,
            rule: config.gsp_rule,
            eta: config.eta,
            uniform: config.uniform,
            damping: config.damping,
            update: config.update,
            discretization: config.discretization(),
        }
    }
}

/// Result of one round: the outcome of the current profile and the next one.
#[derive(Clone, Debug)]
pub struct RoundResult {
    pub ledger: Vec<BidderLedger>,
    pub next: BidProfile,
    /// Single-auction evaluations spent on best-response curves.
    pub curve_evaluations: u64,
}

fn update_bidder(
    market: &Market,
    settings: &RoundSettings,
    profile: &BidProfile,
    outcomes: &[AuctionOutcome],
    i: usize,
    t: usize,
) -> Result<(Vec<f64>, u64), EngineError> {
    let eta = settings.eta.eta(t);
    if profile.level == 0 {
        let (value, spend) = market.bidder_totals(i, outcomes);
        let k = settings.uniform.apply(profile.kappas[i][0], value, spend, eta)?;
        return Ok((vec![k], 0));
    }
    let view = MarketView {
        mechanism: settings.mechanism,
        rule: settings.rule,
        instances: &market.dataset.instances,
        scaled_values: &market.scaled,
        outcomes,
    };
    let br = best_response(
        &view,
        &market.entries[i],
        &market.dataset.family,
        profile.level,
        &profile.kappas[i],
        &settings.discretization,
        &settings.uniform,
        if settings.damping { eta } else { 1.0 },
    );
    Ok((br.kappas, br.evaluations))
}

/// Runs every auction under `profile`, then (if `update`) moves each bidder
/// against the frozen outcome: the uniform update at level 0, the non-uniform
/// best response above.
pub fn run_round(
    market: &Market,
    settings: &RoundSettings,
    profile: &BidProfile,
    t: usize,
    update: bool,
) -> Result<RoundResult, EngineError> {
    let mut bids = market.bids(profile);
    let mut outcomes = market.outcomes(settings.mechanism, settings.rule, &bids);
    let ledger = market.ledger(&outcomes);
    if !update {
        return Ok(RoundResult { ledger, next: profile.clone(), curve_evaluations: 0 });
    }
    let mut next = profile.clone();
    let mut curve_evaluations = 0;
    match settings.update {
        UpdateMode::Simultaneous => {
            let moved: Vec<(Vec<f64>, u64)> = (0..market.num_advertisers())
                .into_par_iter()
                .map(|i| update_bidder(market, settings, profile, &outcomes, i, t))
                .collect::<Result<_, _>>()?;
            for (i, (k, e)) in moved.into_iter().enumerate() {
                next.kappas[i] = k;
                curve_evaluations += e;
            }
        }
        UpdateMode::Sequential => {
            for i in 0..market.num_advertisers() {
                let (k, e) = update_bidder(market, settings, &next, &outcomes, i, t)?;
                next.kappas[i] = k;
                curve_evaluations += e;
                for &(q, c) in &market.entries[i] {
                    let d = market.partition_of(next.level, q);
                    bids[q][c] = next.kappas[i][d] * market.scaled[q][c];
                    outcomes[q] = run_auction_with(settings.mechanism, settings.rule, &market.dataset.instances[q], &bids[q]);
                }
            }
        }
    }
    Ok(RoundResult { ledger, next, curve_evaluations })
}

/// One run of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub cell: Cell,
    pub run: usize,
    /// One row per iteration; row `t` measures the profile after `t − 1` updates.
    pub trajectory: Vec<MetricRow>,
    pub final_profile: BidProfile,
    pub final_ledger: Vec<BidderLedger>,
    pub dataset_digest: String,
    /// Full auctions run for the per-round measurements (`M · T`).
    pub auctions_baseline: u64,
    /// Single-auction evaluations spent on best-response curves.
    pub auctions_curve: u64,
}

impl RunReport {
    pub fn final_row(&self) -> &MetricRow {
        self.trajectory.last().expect("trajectory is never empty")
    }
}

fn metric_row(
    cell: Cell,
    run: usize,
    iteration: usize,
    ledger: &[BidderLedger],
    profile: &BidProfile,
    participation: &[Vec<bool>],
) -> Result<MetricRow, EngineError> {
    let weights: Vec<f64> = ledger.iter().map(|l| l.spend).collect();
    Ok(MetricRow {
        mechanism: cell.mechanism,
        reserve: cell.reserve,
        level: cell.level,
        run,
        iteration,
        profit: metrics::profit(ledger),
        welfare: metrics::welfare(ledger),
        bid_multiplier: metrics::avg_bid_multiplier(&profile.kappas, participation, &weights)?,
        strength: metrics::strength(&profile.kappas, participation, &weights)?,
        relative_margin: metrics::relative_margin(ledger)?,
        roi: metrics::roi(ledger),
    })
}

/// Runs `config.iterations` rounds of one cell on a prepared market.
pub fn simulate(market: &Market, config: &SimulationConfig, cell: Cell, run: usize) -> Result<RunReport, EngineError> {
    let depth = market.dataset.family.depth();
    if cell.level > depth {
        return Err(EngineError::Config(format!("level {} exceeds the hierarchy depth {depth}", cell.level)));
    }
    let settings = RoundSettings::new(config, cell.mechanism);
    let participation = market.participation(cell.level);
    let parts = market.dataset.family.num_sets(cell.level);
    let mut profile = BidProfile::uniform(market.num_advertisers(), parts, cell.level, 1.0);
    let mut trajectory = Vec::with_capacity(config.iterations);
    let mut ledger = Vec::new();
    let mut auctions_curve = 0;
    for t in 0..config.iterations {
        let last = t + 1 == config.iterations;
        let round = run_round(market, &settings, &profile, t, !last)?;
        trajectory.push(metric_row(cell, run, t + 1, &round.ledger, &profile, &participation)?);
        auctions_curve += round.curve_evaluations;
        ledger = round.ledger;
        if !last {
            profile = round.next;
        }
    }
    Ok(RunReport {
        cell,
        run,
        trajectory,
        final_profile: profile,
        final_ledger: ledger,
        dataset_digest: market.dataset.digest(),
        auctions_baseline: (config.iterations * market.dataset.instances.len()) as u64,
        auctions_curve,
    })
}

/// Generates run `run`'s dataset and simulates `config.cell()` on it.
pub fn run_simulation(config: &SimulationConfig, run: usize) -> Result<RunReport, EngineError> {
    config.validate()?;
    let dataset = build_dataset(&config.dataset_config(config.reserve), run_seed(config.seed, run))?;
    simulate(&Market::new(dataset), config, config.cell(), run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<Cell>,
    pub benchmark: Cell,
    /// Grouped by cell (in `cells` order), then by run.
    pub reports: Vec<RunReport>,
    pub table: Vec<AggregateRow>,
}

/// Aggregates each cell's final rows against the benchmark's, pairing runs.
pub fn aggregate_reports(cells: &[Cell], benchmark: Cell, reports: &[RunReport]) -> Result<Vec<AggregateRow>, EngineError> {
    let finals = |cell: Cell| -> Vec<MetricRow> {
        reports.iter().filter(|r| r.cell == cell).map(|r| r.final_row().clone()).collect()
    };
    let bench = finals(benchmark);
    if bench.is_empty() {
        return Err(EngineError::BenchmarkMissing(benchmark));
    }
    cells.iter().map(|&c| Ok(aggregate(&finals(c), &bench)?)).collect()
}

/// Every cell of `config.experiment` over `config.runs` runs. Run `r` uses the
/// same dataset in every cell (up to the reserve flag, which only switches
/// reserve prices on or off).
pub fn run_experiment(config: &SimulationConfig) -> Result<ExperimentResult, EngineError> {
    config.validate()?;
    let cells = config.experiment.cells();
    let benchmark = config.experiment.benchmark;
    if !cells.contains(&benchmark) {
        return Err(EngineError::BenchmarkMissing(benchmark));
    }
    let per_run: Vec<Vec<RunReport>> = (0..config.runs)
        .into_par_iter()
        .map(|r| {
            let mut out = Vec::with_capacity(cells.len());
            for &reserve in &config.experiment.reserves {
                let dataset = build_dataset(&config.dataset_config(reserve), run_seed(config.seed, r))?;
                let market = Market::new(dataset);
                for &cell in cells.iter().filter(|c| c.reserve == reserve) {
                    out.push(simulate(&market, config, cell, r)?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_, EngineError>>()?;
    let mut reports = Vec::with_capacity(cells.len() * config.runs);
    for &cell in &cells {
        for run in &per_run {
            reports.extend(run.iter().filter(|rep| rep.cell == cell).cloned());
        }
    }
    let table = aggregate_reports(&cells, benchmark, &reports)?;
    Ok(ExperimentResult { cells, benchmark, reports, table })
}
