//! Welfare, profit, constraint tightness and non-uniformity metrics, and
//! paired benchmark-relative aggregation across runs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::Mechanism;

/// z-value of a two-sided 95% normal interval.
pub const Z95: f64 = 1.96;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("total spend is zero but total value is {0}")]
    ZeroSpend(f64),
    #[error("multiplier must be positive, got {0}")]
    NonPositiveMultiplier(f64),
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("run {0} has no benchmark counterpart")]
    MissingBenchmark(usize),
    #[error("benchmark {metric} is zero in run {run}")]
    ZeroBenchmark { metric: &'static str, run: usize },
}

/// One bidder's totals over a round. `value` is already scaled by tCPA;
/// `cost` is the user cost of the slots it won.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BidderLedger {
    pub value: f64,
    pub spend: f64,
    pub cost: f64,
}

pub fn welfare(ledgers: &[BidderLedger]) -> f64 {
    ledgers.iter().map(|l| l.value - l.cost).sum()
}

pub fn profit(ledgers: &[BidderLedger]) -> f64 {
    ledgers.iter().map(|l| l.spend - l.cost).sum()
}

/// `Σ|value − spend| / Σ spend`; zero for an empty market.
pub fn relative_margin(ledgers: &[BidderLedger]) -> Result<f64, MetricsError> {
    let spend: f64 = ledgers.iter().map(|l| l.spend).sum();
    let gap: f64 = ledgers.iter().map(|l| (l.value - l.spend).abs()).sum();
    if spend > 0.0 {
        Ok(gap / spend)
    } else if gap == 0.0 {
        Ok(0.0)
    } else {
        Err(MetricsError::ZeroSpend(gap))
    }
}

/// Spend-weighted ROI `Σ value / Σ spend`; 1 when nothing was spent or won.
pub fn roi(ledgers: &[BidderLedger]) -> f64 {
    let value: f64 = ledgers.iter().map(|l| l.value).sum();
    let spend: f64 = ledgers.iter().map(|l| l.spend).sum();
    if spend > 0.0 {
        value / spend
    } else if value == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Log multipliers of the partitions a bidder took part in (all of them if
/// it took part in none).
fn active_logs(kappas: &[f64], participated: &[bool]) -> Result<Vec<f64>, MetricsError> {
    if let Some(&k) = kappas.iter().find(|&&k| !(k > 0.0)) {
        return Err(MetricsError::NonPositiveMultiplier(k));
    }
    let some = participated.iter().any(|&p| p);
    Ok(kappas
        .iter()
        .zip(participated.iter().chain(std::iter::repeat(&false)))
        .filter(|&(_, &p)| p || !some)
        .map(|(k, _)| k.ln())
        .collect())
}

/// Mean absolute deviation of `log κ_d` from its mean.
pub fn bidder_strength(kappas: &[f64], participated: &[bool]) -> Result<f64, MetricsError> {
    let logs = active_logs(kappas, participated)?;
    if logs.is_empty() {
        return Ok(0.0);
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    Ok(logs.iter().map(|l| (l - mean).abs()).sum::<f64>() / n)
}

/// Geometric mean of the bidder's multipliers.
pub fn bidder_multiplier(kappas: &[f64], participated: &[bool]) -> Result<f64, MetricsError> {
    let logs = active_logs(kappas, participated)?;
    if logs.is_empty() {
        return Ok(1.0);
    }
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

fn weighted_mean(xs: &[f64], weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / total
    } else if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Spend-weighted average of per-bidder strengths.
pub fn strength(kappas: &[Vec<f64>], participated: &[Vec<bool>], weights: &[f64]) -> Result<f64, MetricsError> {
    let per: Vec<f64> = kappas
        .iter()
        .zip(participated)
        .map(|(k, p)| bidder_strength(k, p))
        .collect::<Result<_, _>>()?;
    Ok(weighted_mean(&per, weights))
}

/// Spend-weighted average of per-bidder geometric-mean multipliers.
pub fn avg_bid_multiplier(kappas: &[Vec<f64>], participated: &[Vec<bool>], weights: &[f64]) -> Result<f64, MetricsError> {
    let per: Vec<f64> = kappas
        .iter()
        .zip(participated)
        .map(|(k, p)| bidder_multiplier(k, p))
        .collect::<Result<_, _>>()?;
    Ok(weighted_mean(&per, weights))
}

/// Metrics of one cell in one run at one iteration (1-based; the last
/// iteration is the run's final state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mechanism: Mechanism,
    pub reserve: bool,
    pub level: usize,
    pub run: usize,
    pub iteration: usize,
    pub profit: f64,
    pub welfare: f64,
    pub bid_multiplier: f64,
    pub strength: f64,
    pub relative_margin: f64,
    pub roi: f64,
}

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `mean ± 1.96 · s / √n` with the sample standard deviation `s`.
pub fn mean_ci(xs: &[f64]) -> Result<Estimate, MetricsError> {
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooFewRuns(n));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z95 * var.sqrt() / (n as f64).sqrt();
    Ok(Estimate { mean, ci_lo: mean - half, ci_hi: mean + half })
}

/// One aggregated table row. Deltas are percentages relative to the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub mechanism: Mechanism,
    pub reserve: bool,
    pub level: usize,
    pub runs: usize,
    pub profit_delta_pct: Estimate,
    pub welfare_delta_pct: Estimate,
    pub bid_multiplier: Estimate,
    pub strength: Estimate,
}

/// Paired percentage deltas `100 · (x − bench) / bench`, matched on `run`.
pub fn paired_deltas(
    rows: &[MetricRow],
    bench: &[MetricRow],
    metric: &'static str,
    get: impl Fn(&MetricRow) -> f64,
) -> Result<Vec<f64>, MetricsError> {
    rows.iter()
        .map(|r| {
            let b = bench.iter().find(|b| b.run == r.run).ok_or(MetricsError::MissingBenchmark(r.run))?;
            let base = get(b);
            if base == 0.0 {
                return Err(MetricsError::ZeroBenchmark { metric, run: r.run });
            }
            Ok(100.0 * (get(r) - base) / base)
        })
        .collect()
}

/// Aggregates one cell's final rows (one per run) against the benchmark's.
pub fn aggregate(rows: &[MetricRow], bench: &[MetricRow]) -> Result<AggregateRow, MetricsError> {
    let first = rows.first().ok_or(MetricsError::TooFewRuns(0))?;
    let raw = |f: fn(&MetricRow) -> f64| mean_ci(&rows.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateRow {
        mechanism: first.mechanism,
        reserve: first.reserve,
        level: first.level,
        runs: rows.len(),
        profit_delta_pct: mean_ci(&paired_deltas(rows, bench, "profit", |r| r.profit)?)?,
        welfare_delta_pct: mean_ci(&paired_deltas(rows, bench, "welfare", |r| r.welfare)?)?,
        bid_multiplier: raw(|r| r.bid_multiplier)?,
        strength: raw(|r| r.strength)?,
    })
}
