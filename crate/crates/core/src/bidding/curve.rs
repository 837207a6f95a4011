//! Per-partition value/spend curves of one bidder against frozen rivals, and
//! the non-uniform best response built on them.
//!
//! With every other bid fixed, a bidder's allocation in one auction is a step
//! function of its multiplier: it enters once `κ·a` clears both its reserve
//! and its cost (`a = v·tCPA`), and moves up one slot each time its score
//! passes the next rival. Within a step GSP and VCG payments are constant and
//! the FPA payment is linear in `κ`. The curves below are assembled from these
//! exact steps instead of re-running whole auctions per multiplier.

use serde::{Deserialize, Serialize};

use super::greedy::greedy_select;
use super::hull::{lower_convex_hull, CurvePoint};
use super::UniformUpdate;
use crate::auction::{inserted_outcome, insertion_rank, AuctionOutcome, Entrant, GspNextRule, Mechanism, Rival};
use crate::datagen::AuctionInstance;
use crate::hierarchy::LaminarFamily;

/// Relative offset used to step just past a threshold, so ties at the exact
/// crossing point never decide a state.
pub const THRESHOLD_EPS: f64 = 1e-9;
/// Smallest multiplier the best response will emit.
pub const MIN_KAPPA: f64 = 1e-6;

/// One state of a per-auction response, valid for multipliers from `kappa`
/// up to the next step's `kappa`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseStep {
    pub kappa: f64,
    /// Value of the slot won, already scaled by tCPA.
    pub value: f64,
    pub spend_fixed: f64,
    pub spend_per_kappa: f64,
}

impl ResponseStep {
    pub fn spend_at(&self, kappa: f64) -> f64 {
        self.spend_fixed + self.spend_per_kappa * kappa
    }
}

/// The bidder's outcome in one auction as a function of its multiplier.
/// Below the first step it wins nothing and pays nothing.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueryResponse {
    pub steps: Vec<ResponseStep>,
    /// Single-auction evaluations spent building it.
    pub evaluations: u64,
}

impl QueryResponse {
    /// `(value, spend)` at multiplier `kappa`.
    pub fn at(&self, kappa: f64) -> (f64, f64) {
        let k = self.steps.partition_point(|s| s.kappa <= kappa);
        match k {
            0 => (0.0, 0.0),
            _ => {
                let s = &self.steps[k - 1];
                (s.value, s.spend_at(kappa))
            }
        }
    }
}

/// A round's frozen market: every auction's baseline outcome at the current
/// bids, plus the per-candidate scaled values `a = v·tCPA`.
pub struct MarketView<'a> {
    pub mechanism: Mechanism,
    pub rule: GspNextRule,
    pub instances: &'a [AuctionInstance],
    pub scaled_values: &'a [Vec<f64>],
    pub outcomes: &'a [AuctionOutcome],
}

impl MarketView<'_> {
    /// Response of candidate `c` of auction `q` with all other bids frozen.
    pub fn response(&self, q: usize, c: usize) -> QueryResponse {
        let inst = &self.instances[q];
        let out = &self.outcomes[q];
        let cand = inst.candidates[c];
        let a = self.scaled_values[q][c];
        let z = inst.num_slots();
        if !(a > 0.0) {
            return QueryResponse::default();
        }
        let rivals: Vec<Rival> = out
            .ranked()
            .filter(|&j| j != c)
            .take(z)
            .map(|j| Rival { score: out.scores[j], id: inst.candidates[j].advertiser })
            .collect();

        let entry = (cand.reserve.max(cand.cost) / a).max(MIN_KAPPA);
        let mut thresholds: Vec<f64> = vec![entry];
        thresholds.extend(rivals.iter().map(|r| (r.score + cand.cost) / a).filter(|&t| t > entry));
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();

        let mut steps: Vec<ResponseStep> = Vec::with_capacity(thresholds.len());
        let mut last_alloc = 0.0;
        let mut evaluations = 0;
        for t in thresholds {
            let kappa = t * (1.0 + THRESHOLD_EPS);
            let bid = kappa * a;
            let score = bid - cand.cost;
            if bid < cand.reserve || score < 0.0 {
                continue;
            }
            let rank = insertion_rank(&rivals, score, cand.advertiser);
            let entrant = Entrant { bid, cost: cand.cost, reserve: cand.reserve };
            let (alloc, pay) = inserted_outcome(self.mechanism, self.rule, &inst.slot_ctrs, &rivals, rank, entrant);
            evaluations += 1;
            if alloc == last_alloc {
                continue;
            }
            last_alloc = alloc;
            let (spend_fixed, spend_per_kappa) = match self.mechanism {
                Mechanism::Fpa => (0.0, alloc * a),
                Mechanism::Gsp | Mechanism::Vcg => (pay, 0.0),
            };
            steps.push(ResponseStep { kappa, value: alloc * a, spend_fixed, spend_per_kappa });
        }
        QueryResponse { steps, evaluations }
    }
}

/// How a partition's curve samples the multiplier axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    /// Every multiplier at which the bidder's outcome changes.
    Breakpoints,
    /// A fixed increasing grid; the anchor maps to its smallest point.
    Grid(Vec<f64>),
}

impl Discretization {
    /// `points` multipliers spaced log-uniformly over `[lo, hi]`.
    pub fn log_grid(lo: f64, hi: f64, points: usize) -> Discretization {
        let n = points.max(2);
        let (a, b) = (lo.ln(), hi.ln());
        Discretization::Grid((0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect())
    }
}

/// The curve of one partition from its auctions' responses, anchor first.
/// Each point carries the multipliers that produce it.
pub fn curve_from_responses(responses: &[QueryResponse], mechanism: Mechanism, disc: &Discretization) -> Vec<CurvePoint> {
    match disc {
        Discretization::Grid(grid) => {
            let mut points = Vec::with_capacity(grid.len() + 1);
            let g0 = grid.first().copied().unwrap_or(1.0);
            points.push(CurvePoint { value: 0.0, spend: 0.0, kappa_min: g0, kappa_max: g0, spend_per_kappa: 0.0 });
            for &g in grid {
                let (mut value, mut spend) = (0.0, 0.0);
                for r in responses {
                    let (v, s) = r.at(g);
                    value += v;
                    spend += s;
                }
                points.push(CurvePoint { value, spend, kappa_min: g, kappa_max: g, spend_per_kappa: 0.0 });
            }
            points
        }
        Discretization::Breakpoints => {
            // (kappa, Δvalue, Δspend_fixed, Δspend_per_kappa)
            let mut events: Vec<(f64, f64, f64, f64)> = Vec::new();
            for r in responses {
                let mut prev = ResponseStep { kappa: 0.0, value: 0.0, spend_fixed: 0.0, spend_per_kappa: 0.0 };
                for s in &r.steps {
                    events.push((
                        s.kappa,
                        s.value - prev.value,
                        s.spend_fixed - prev.spend_fixed,
                        s.spend_per_kappa - prev.spend_per_kappa,
                    ));
                    prev = *s;
                }
            }
            events.sort_by(|x, y| x.0.total_cmp(&y.0));

            let below = |k: f64| k * (1.0 - 2.0 * THRESHOLD_EPS);
            let first = events.first().map_or(f64::INFINITY, |e| below(e.0));
            let mut points = vec![CurvePoint {
                value: 0.0,
                spend: 0.0,
                kappa_min: MIN_KAPPA,
                kappa_max: first.max(MIN_KAPPA),
                spend_per_kappa: 0.0,
            }];
            let (mut value, mut fixed, mut slope) = (0.0, 0.0, 0.0);
            let mut i = 0;
            while i < events.len() {
                let kappa = events[i].0;
                while i < events.len() && events[i].0 == kappa {
                    value += events[i].1;
                    fixed += events[i].2;
                    slope += events[i].3;
                    i += 1;
                }
                let kappa_max = events.get(i).map_or(f64::INFINITY, |e| below(e.0).max(kappa));
                // only first-price spend moves inside a state; keep float noise out of the others
                let slope = if mechanism == Mechanism::Fpa { slope } else { 0.0 };
                points.push(CurvePoint { value, spend: fixed + slope * kappa, kappa_min: kappa, kappa_max, spend_per_kappa: slope });
            }
            points
        }
    }
}

/// Lower hull of one partition's curve.
pub fn evaluate_partition_curve(
    view: &MarketView<'_>,
    entries: &[(usize, usize)],
    disc: &Discretization,
) -> (Vec<CurvePoint>, u64) {
    let (curve, evaluations) = partition_curve(view, entries, disc);
    (lower_convex_hull(&curve), evaluations)
}

/// Raw (unhulled) curve of one partition and the evaluations it took.
pub fn partition_curve(view: &MarketView<'_>, entries: &[(usize, usize)], disc: &Discretization) -> (Vec<CurvePoint>, u64) {
    let responses: Vec<QueryResponse> = entries.iter().map(|&(q, c)| view.response(q, c)).collect();
    let evaluations = match disc {
        Discretization::Breakpoints => responses.iter().map(|r| r.evaluations).sum(),
        Discretization::Grid(g) => (g.len() * entries.len()) as u64,
    };
    (curve_from_responses(&responses, view.mechanism, disc), evaluations)
}

/// Moves partitions to later points of their raw curves while the total
/// spend stays within the total value. The hull skips such points, so this
/// picks up value the convex selection leaves on the table.
///
/// `at` holds one index per curve and is updated in place.
pub fn fill_raw(curves: &[Vec<CurvePoint>], at: &mut [usize]) {
    let mut value: f64 = curves.iter().zip(at.iter()).map(|(c, &k)| c[k].value).sum();
    let mut spend: f64 = curves.iter().zip(at.iter()).map(|(c, &k)| c[k].spend).sum();
    loop {
        let mut moved = false;
        for (c, k) in curves.iter().zip(at.iter_mut()) {
            let (v0, s0) = (c[*k].value, c[*k].spend);
            let best = (*k + 1..c.len())
                .filter(|&j| c[j].value > v0 && spend - s0 + c[j].spend <= value - v0 + c[j].value)
                .max_by(|&a, &b| c[a].value.total_cmp(&c[b].value).then(c[b].spend.total_cmp(&c[a].spend)));
            if let Some(j) = best {
                value += c[j].value - v0;
                spend += c[j].spend - s0;
                *k = j;
                moved = true;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Result of one bidder's best-response step.
#[derive(Clone, Debug, PartialEq)]
pub struct BestResponse {
    /// Undamped target multipliers per partition.
    pub target: Vec<f64>,
    /// Damped multipliers per partition.
    pub kappas: Vec<f64>,
    pub value: f64,
    pub spend: f64,
    pub evaluations: u64,
}

/// Non-uniform best response of one bidder over the partitions at `level`.
///
/// `entries` lists the bidder's `(auction, candidate)` positions; `current`
/// holds its multipliers per partition. Selected curve points are mapped back
/// to a multiplier by clamping a common reference ([`reference_multiplier`])
/// into each point's range, so partitions whose ranges overlap end up with the
/// same multiplier.
pub fn best_response(
    view: &MarketView<'_>,
    entries: &[(usize, usize)],
    family: &LaminarFamily,
    level: usize,
    current: &[f64],
    disc: &Discretization,
    pacing: &UniformUpdate,
    eta: f64,
) -> BestResponse {
    let parts = family.num_sets(level);
    debug_assert_eq!(current.len(), parts);
    let mut by_part: Vec<Vec<(usize, usize)>> = vec![Vec::new(); parts];
    for &(q, c) in entries {
        by_part[family.cell_of(level, q)].push((q, c));
    }
    let active: Vec<usize> = (0..parts).filter(|&d| !by_part[d].is_empty()).collect();
    let mut evaluations = 0;
    let curves: Vec<Vec<CurvePoint>> = active
        .iter()
        .map(|&d| {
            let (c, e) = partition_curve(view, &by_part[d], disc);
            evaluations += e;
            c
        })
        .collect();
    let hulls: Vec<Vec<CurvePoint>> = curves.iter().map(|c| lower_convex_hull(c)).collect();
    let sel = greedy_select(&hulls);
    // hull vertices are raw points; find them again on the raw curves
    let mut at: Vec<usize> = curves
        .iter()
        .zip(hulls.iter().zip(&sel.index))
        .map(|(c, (h, &k))| c.iter().position(|p| p == &h[k]).unwrap_or(0))
        .collect();
    fill_raw(&curves, &mut at);
    let chosen: Vec<CurvePoint> = curves.iter().zip(&at).map(|(c, &k)| c[k]).collect();
    let sel_value: f64 = chosen.iter().map(|p| p.value).sum();
    let sel_spend: f64 = chosen.iter().map(|p| p.spend).sum();

    let current_mean = {
        let logs: Vec<f64> = active.iter().map(|&d| current[d].ln()).collect();
        if logs.is_empty() {
            1.0
        } else {
            (logs.iter().sum::<f64>() / logs.len() as f64).exp()
        }
    };
    let pace = if sel_spend > 0.0 {
        (sel_value / sel_spend).clamp(pacing.ratio_min, pacing.ratio_max)
    } else if sel_value > 0.0 {
        pacing.ratio_max
    } else {
        1.0
    };
    let reference = reference_multiplier(&chosen, current_mean, pace);

    // Value is already maximal; leftover slack goes into first-price states,
    // where a higher multiplier costs more without changing the allocation.
    let lambda = slack_scale(&chosen, sel_value - sel_spend);
    let mut spend = sel_spend;

    // partitions the bidder never appears in just follow the reference
    let mut target = vec![reference.max(MIN_KAPPA); parts];
    for (p, &d) in chosen.iter().zip(&active) {
        target[d] = if p.spend_per_kappa > 0.0 {
            let k = (lambda * p.kappa_min).min(p.kappa_max);
            spend += p.spend_per_kappa * (k - p.kappa_min);
            k
        } else {
            reference.clamp(p.kappa_min, p.kappa_max).max(MIN_KAPPA)
        };
    }
    let kappas = current
        .iter()
        .zip(&target)
        .map(|(&k, &t)| (1.0 - eta) * k + eta * t)
        .collect();
    BestResponse { target, kappas, value: sel_value, spend, evaluations }
}

/// Common multiplier that selected points are clamped towards.
///
/// Where spend does not move with one's own multiplier (second-price
/// payments), every multiplier inside a point's range is equally good for the
/// bidder. The tie is broken the way a pacing bidder would: scale the current
/// level by `pace` (its clamped value-to-spend ratio, as in the uniform
/// update) and keep the result within the range all winning points share.
/// Disjoint ranges bound it from the other side instead.
pub fn reference_multiplier(chosen: &[CurvePoint], current: f64, pace: f64) -> f64 {
    let paced = current * pace;
    let winning = chosen.iter().filter(|p| p.value > 0.0);
    let lo = winning.clone().map(|p| p.kappa_min).fold(f64::NEG_INFINITY, f64::max);
    let hi = winning.map(|p| p.kappa_max).fold(f64::INFINITY, f64::min);
    if lo == f64::NEG_INFINITY {
        return paced;
    }
    paced.clamp(lo.min(hi), lo.max(hi))
}

/// Largest common factor `λ ≥ 1` by which the selected multipliers with
/// multiplier-dependent spend can grow (each capped at its `kappa_max`)
/// while the added spend stays within `slack`.
pub fn slack_scale(chosen: &[CurvePoint], slack: f64) -> f64 {
    let budget = slack * (1.0 - 1e-9);
    let extra = |lambda: f64| -> f64 {
        chosen
            .iter()
            .filter(|p| p.spend_per_kappa > 0.0)
            .map(|p| p.spend_per_kappa * ((lambda * p.kappa_min).min(p.kappa_max) - p.kappa_min))
            .sum()
    };
    if !(budget > 0.0) || !chosen.iter().any(|p| p.spend_per_kappa > 0.0) {
        return 1.0;
    }
    let mut hi = 2.0;
    while extra(hi) <= budget {
        if hi > 1e12 {
            return hi;
        }
        hi *= 2.0;
    }
    let mut lo = 1.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if extra(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}
