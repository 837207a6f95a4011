//! Position auctions: one allocation rule shared by FPA, GSP and VCG (with
//! reserves and user costs), plus the three payment rules.
//!
//! All quantities are per impression: a candidate's bid `b` already includes
//! its predicted click-through rate, and its ranking score is `b - cost`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::AuctionInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Fpa,
    Gsp,
    Vcg,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::Fpa, Mechanism::Gsp, Mechanism::Vcg];

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Fpa => "fpa",
            Mechanism::Gsp => "gsp",
            Mechanism::Vcg => "vcg",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown auction format {0:?} (expected fpa, gsp or vcg)")]
pub struct UnknownMechanism(pub String);

impl FromStr for Mechanism {
    type Err = UnknownMechanism;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fpa" => Ok(Mechanism::Fpa),
            "gsp" => Ok(Mechanism::Gsp),
            "vcg" => Ok(Mechanism::Vcg),
            _ => Err(UnknownMechanism(s.to_string())),
        }
    }
}

/// Which candidate prices a GSP winner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GspNextRule {
    /// The next candidate in the ranked filtered order, so the last slot is
    /// priced by the best runner-up.
    #[default]
    RankedNext,
    /// Only a winner in the next slot counts; the last slot pays `max(reserve, cost)`.
    NextSlotOnly,
}

#[inline]
pub fn score(bid: f64, cost: f64) -> f64 {
    bid - cost
}

/// Allocation and payments for one auction. Vectors are indexed like the
/// instance's candidate list.
#[derive(Clone, Debug, PartialEq)]
pub struct AuctionOutcome {
    pub slot: Vec<Option<usize>>,
    pub allocation: Vec<f64>,
    pub payment: Vec<f64>,
    pub scores: Vec<f64>,
    /// Winners in slot order.
    pub winners: Vec<usize>,
    /// Candidates that passed the filters but got no slot, in rank order.
    pub runner_ups: Vec<usize>,
}

impl AuctionOutcome {
    /// Winners followed by runner-ups.
    pub fn ranked(&self) -> impl Iterator<Item = usize> + '_ {
        self.winners.iter().chain(&self.runner_ups).copied()
    }
}

/// Ranking order: higher score first, then lower advertiser id.
#[inline]
pub fn ranks_above(score_a: f64, id_a: u32, score_b: f64, id_b: u32) -> bool {
    score_a > score_b || (score_a == score_b && id_a < id_b)
}

/// Filters candidates with `bid >= reserve` and `score >= 0`, ranks them, and
/// hands slots `1..=k` to the top `k = min(z, #filtered)`.
pub fn allocate(instance: &AuctionInstance, bids: &[f64]) -> AuctionOutcome {
    assert_eq!(bids.len(), instance.candidates.len(), "one bid per candidate");
    let n = bids.len();
    let scores: Vec<f64> = instance.candidates.iter().zip(bids).map(|(c, &b)| score(b, c.cost)).collect();
    let mut ranked: Vec<usize> = (0..n)
        .filter(|&i| bids[i] >= instance.candidates[i].reserve && scores[i] >= 0.0)
        .collect();
    ranked.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then(instance.candidates[a].advertiser.cmp(&instance.candidates[b].advertiser))
    });
    let k = ranked.len().min(instance.num_slots());
    let mut slot = vec![None; n];
    let mut allocation = vec![0.0; n];
    for (s, &i) in ranked[..k].iter().enumerate() {
        slot[i] = Some(s);
        allocation[i] = instance.slot_ctrs[s];
    }
    let runner_ups = ranked.split_off(k);
    AuctionOutcome { slot, allocation, payment: vec![0.0; n], scores, winners: ranked, runner_ups }
}

pub fn fpa_payment(outcome: &AuctionOutcome, bids: &[f64]) -> Vec<f64> {
    outcome.allocation.iter().zip(bids).map(|(a, b)| a * b).collect()
}

pub fn gsp_payment(instance: &AuctionInstance, outcome: &AuctionOutcome, rule: GspNextRule) -> Vec<f64> {
    let mut pay = vec![0.0; outcome.allocation.len()];
    let ranked: Vec<usize> = outcome.ranked().collect();
    for (k, &i) in outcome.winners.iter().enumerate() {
        let next = match rule {
            GspNextRule::RankedNext => ranked.get(k + 1),
            GspNextRule::NextSlotOnly => outcome.winners.get(k + 1),
        };
        let next_score = next.map_or(0.0, |&j| outcome.scores[j]);
        let c = &instance.candidates[i];
        pay[i] = outcome.allocation[i] * c.reserve.max(next_score + c.cost);
    }
    pay
}

/// Algorithm-2 style VCG payment with the reserve inside every term.
pub fn vcg_payment(instance: &AuctionInstance, outcome: &AuctionOutcome) -> Vec<f64> {
    let mut pay = vec![0.0; outcome.allocation.len()];
    let ranked: Vec<usize> = outcome.ranked().collect();
    for (k, &i) in outcome.winners.iter().enumerate() {
        let c = &instance.candidates[i];
        let lower = ranked[k + 1..].iter().map(|&y| (outcome.scores[y], outcome.allocation[y]));
        pay[i] = vcg_walk(outcome.allocation[i], c.reserve, c.cost, lower);
    }
    pay
}

fn vcg_walk(allocation: f64, reserve: f64, cost: f64, lower: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut alloc = allocation;
    let mut payment = 0.0;
    for (score_y, alloc_y) in lower {
        payment += (alloc - alloc_y) * reserve.max(score_y + cost);
        alloc = alloc_y;
        if alloc == 0.0 {
            break;
        }
    }
    payment + alloc * reserve.max(cost)
}

pub fn run_auction(mechanism: Mechanism, instance: &AuctionInstance, bids: &[f64]) -> AuctionOutcome {
    run_auction_with(mechanism, GspNextRule::default(), instance, bids)
}

pub fn run_auction_with(mechanism: Mechanism, rule: GspNextRule, instance: &AuctionInstance, bids: &[f64]) -> AuctionOutcome {
    let mut outcome = allocate(instance, bids);
    outcome.payment = match mechanism {
        Mechanism::Fpa => fpa_payment(&outcome, bids),
        Mechanism::Gsp => gsp_payment(instance, &outcome, rule),
        Mechanism::Vcg => vcg_payment(instance, &outcome),
    };
    outcome
}

/// A filtered competitor as seen by one bidder: its score and advertiser id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rival {
    pub score: f64,
    pub id: u32,
}

/// Rank a bidder with `(score, id)` would take among `rivals`, which must
/// already be in ranking order.
pub fn insertion_rank(rivals: &[Rival], score: f64, id: u32) -> usize {
    rivals.partition_point(|r| ranks_above(r.score, r.id, score, id))
}

/// The bidder's terms when it sits between fixed rivals.
#[derive(Clone, Copy, Debug)]
pub struct Entrant {
    pub bid: f64,
    pub cost: f64,
    pub reserve: f64,
}

/// Allocation and payment of a bidder inserted at `rank` into the ranked
/// filtered `rivals`, computed without re-running the whole auction. Matches
/// [`run_auction_with`] on the assembled instance.
pub fn inserted_outcome(
    mechanism: Mechanism,
    rule: GspNextRule,
    slot_ctrs: &[f64],
    rivals: &[Rival],
    rank: usize,
    entrant: Entrant,
) -> (f64, f64) {
    let z = slot_ctrs.len();
    if rank >= z {
        return (0.0, 0.0);
    }
    let alloc = slot_ctrs[rank];
    let payment = match mechanism {
        Mechanism::Fpa => alloc * entrant.bid,
        Mechanism::Gsp => {
            let next = match rule {
                GspNextRule::RankedNext => rivals.get(rank),
                GspNextRule::NextSlotOnly => rivals.get(rank).filter(|_| rank + 1 < z),
            };
            alloc * entrant.reserve.max(next.map_or(0.0, |r| r.score) + entrant.cost)
        }
        Mechanism::Vcg => {
            let lower = rivals[rank..]
                .iter()
                .enumerate()
                .map(|(j, r)| (r.score, slot_ctrs.get(rank + 1 + j).copied().unwrap_or(0.0)));
            vcg_walk(alloc, entrant.reserve, entrant.cost, lower)
        }
    };
    (alloc, payment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Candidate;
    use proptest::prelude::*;

    fn instance(cands: &[(u32, f64, f64)], ctrs: &[f64]) -> AuctionInstance {
        AuctionInstance {
            query_id: 0,
            leaf_id: 0,
            candidates: cands
                .iter()
                .map(|&(advertiser, cost, reserve)| Candidate { advertiser, value: 1.0, cost, reserve })
                .collect(),
            slot_ctrs: ctrs.to_vec(),
        }
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(2.0, 0.5), 1.5);
        assert!((score(0.3, 0.5) + 0.2).abs() < 1e-15);
        let inst = instance(&[(0, 0.7, 0.0)], &[1.0]);
        assert_eq!(allocate(&inst, &[0.7]).winners, vec![0]);
    }

    #[test]
    fn ranks_by_score() {
        let inst = instance(&[(0, 0.0, 0.0), (1, 0.0, 0.0), (2, 0.0, 0.0)], &[1.0, 0.6]);
        let o = allocate(&inst, &[5.0, 3.0, 1.0]);
        assert_eq!(o.allocation, vec![1.0, 0.6, 0.0]);
        assert_eq!(o.runner_ups, vec![2]);
        assert_eq!(o.slot, vec![Some(0), Some(1), None]);
    }

    #[test]
    fn reserve_excludes_top_scorer() {
        let inst = instance(&[(0, 0.0, 2.0), (1, 0.0, 0.0)], &[1.0]);
        let o = allocate(&inst, &[1.0, 0.5]);
        assert_eq!(o.winners, vec![1]);
        assert!(o.runner_ups.is_empty());
        // b == reserve passes
        let o = allocate(&inst, &[2.0, 0.5]);
        assert_eq!(o.winners, vec![0]);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let inst = instance(&[(7, 0.0, 0.0), (3, 0.0, 0.0)], &[1.0]);
        assert_eq!(allocate(&inst, &[1.0, 1.0]).winners, vec![1]);
    }

    #[test]
    fn fpa_examples() {
        let inst = instance(&[(0, 0.1, 0.0), (1, 0.1, 0.0), (2, 0.1, 0.0)], &[0.5, 0.25]);
        let bids = [2.0, 1.0, 0.5];
        let o = run_auction(Mechanism::Fpa, &inst, &bids);
        assert_eq!(o.payment, vec![1.0, 0.25, 0.0]);
    }

    #[test]
    fn gsp_examples() {
        // allocation 0.5, reserve 0.3, next score 1.5, own cost 0.2
        let inst = instance(&[(0, 0.2, 0.3), (1, 0.5, 0.0)], &[0.5]);
        let o = run_auction(Mechanism::Gsp, &inst, &[3.0, 2.0]);
        assert!((o.payment[0] - 0.85).abs() < 1e-12);
        // sole participant pays its own cost
        let inst = instance(&[(0, 0.4, 0.0)], &[1.0, 0.5]);
        let o = run_auction(Mechanism::Gsp, &inst, &[3.0]);
        assert!((o.payment[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gsp_literal_rule_ignores_runner_up() {
        let inst = instance(&[(0, 0.1, 0.0), (1, 0.1, 0.0)], &[1.0]);
        let conv = run_auction_with(Mechanism::Gsp, GspNextRule::RankedNext, &inst, &[3.0, 2.0]);
        let lit = run_auction_with(Mechanism::Gsp, GspNextRule::NextSlotOnly, &inst, &[3.0, 2.0]);
        assert!((conv.payment[0] - 2.0).abs() < 1e-12);
        assert!((lit.payment[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn vcg_hand_trace() {
        // winner alloc 1; lower: score 2 (alloc 0.5) and score 1 (runner-up); cost_i 0.1
        let inst = instance(&[(0, 0.1, 0.0), (1, 0.0, 0.0), (2, 0.0, 0.0)], &[1.0, 0.5]);
        let o = run_auction(Mechanism::Vcg, &inst, &[5.0, 2.0, 1.0]);
        assert!((o.payment[0] - 1.60).abs() < 1e-12, "{}", o.payment[0]);
        let alone = instance(&[(0, 0.0, 0.0)], &[1.0]);
        assert_eq!(run_auction(Mechanism::Vcg, &alone, &[1.0]).payment[0], 0.0);
    }

    #[test]
    fn vcg_reserve_inside_every_term() {
        // moving the max outside would give max(0.9, (1-0.5)*0.2 + 0.5*0.1 + 0) = 0.9
        let inst = instance(&[(0, 0.0, 0.9), (1, 0.0, 0.0), (2, 0.0, 0.0)], &[1.0, 0.5]);
        let o = run_auction(Mechanism::Vcg, &inst, &[5.0, 0.2, 0.1]);
        assert!((o.payment[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn zero_bids_with_reserves_allocate_nothing() {
        let inst = instance(&[(0, 0.0, 0.1), (1, 0.0, 0.2)], &[1.0, 0.5]);
        for m in Mechanism::ALL {
            let o = run_auction(m, &inst, &[0.0, 0.0]);
            assert!(o.winners.is_empty());
            assert!(o.payment.iter().all(|&p| p == 0.0));
        }
    }

    #[test]
    fn mechanism_parsing() {
        assert_eq!("VCG".parse::<Mechanism>().unwrap(), Mechanism::Vcg);
        assert!("spa".parse::<Mechanism>().is_err());
    }

    fn arb_instance() -> impl Strategy<Value = (AuctionInstance, Vec<f64>)> {
        (1usize..12, 1usize..5).prop_flat_map(|(n, z)| {
            (
                proptest::collection::vec((0.0f64..3.0, 0.0f64..0.5, prop::bool::ANY, 0.0f64..1.0), n),
                proptest::collection::vec(0.2f64..1.0, z - 1),
            )
                .prop_map(move |(cands, decays)| {
                    let mut ctrs = vec![1.0];
                    for d in decays {
                        let last = *ctrs.last().unwrap();
                        ctrs.push(last * d);
                    }
                    let inst = AuctionInstance {
                        query_id: 0,
                        leaf_id: 0,
                        candidates: cands
                            .iter()
                            .enumerate()
                            .map(|(i, &(_, cost, res, r))| Candidate {
                                advertiser: (i * 7 % 13) as u32,
                                value: 1.0,
                                cost,
                                reserve: if res { r } else { 0.0 },
                            })
                            .collect(),
                        slot_ctrs: ctrs,
                    };
                    (inst, cands.iter().map(|c| c.0).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn payment_ordering_and_bounds((inst, bids) in arb_instance()) {
            let f = run_auction(Mechanism::Fpa, &inst, &bids);
            let g = run_auction(Mechanism::Gsp, &inst, &bids);
            let v = run_auction(Mechanism::Vcg, &inst, &bids);
            prop_assert_eq!(&f.slot, &g.slot);
            prop_assert_eq!(&f.slot, &v.slot);
            for i in 0..bids.len() {
                let tol = 1e-9 * f.payment[i].abs().max(1e-12);
                prop_assert!(v.payment[i] <= g.payment[i] + tol);
                prop_assert!(g.payment[i] <= f.payment[i] + tol);
                prop_assert!(v.payment[i] >= 0.0);
                if f.slot[i].is_none() {
                    prop_assert_eq!(g.payment[i], 0.0);
                    prop_assert_eq!(v.payment[i], 0.0);
                }
            }
            // allocated slots form a prefix
            let mut used: Vec<usize> = f.slot.iter().flatten().copied().collect();
            used.sort();
            prop_assert_eq!(used, (0..f.winners.len()).collect::<Vec<_>>());
        }

        #[test]
        fn vcg_payment_ignores_own_bid_within_slot((inst, bids) in arb_instance(), bump in 1.0f64..3.0) {
            let base = run_auction(Mechanism::Vcg, &inst, &bids);
            for &w in &base.winners {
                let mut raised = bids.clone();
                raised[w] *= bump;
                let o = run_auction(Mechanism::Vcg, &inst, &raised);
                if o.slot[w] == base.slot[w] {
                    prop_assert!((o.payment[w] - base.payment[w]).abs() <= 1e-12 * base.payment[w].max(1.0));
                }
            }
        }

        #[test]
        fn inserted_outcome_matches_full_auction((inst, bids) in arb_instance(), who in 0usize..12, gsp_literal in prop::bool::ANY) {
            let who = who % bids.len();
            let rule = if gsp_literal { GspNextRule::NextSlotOnly } else { GspNextRule::RankedNext };
            for m in Mechanism::ALL {
                let full = run_auction_with(m, rule, &inst, &bids);
                let rivals: Vec<Rival> = full
                    .ranked()
                    .filter(|&i| i != who)
                    .map(|i| Rival { score: full.scores[i], id: inst.candidates[i].advertiser })
                    .collect();
                let c = inst.candidates[who];
                let passes = bids[who] >= c.reserve && bids[who] - c.cost >= 0.0;
                let (alloc, pay) = if passes {
                    let rank = insertion_rank(&rivals, bids[who] - c.cost, c.advertiser);
                    inserted_outcome(m, rule, &inst.slot_ctrs, &rivals, rank,
                        Entrant { bid: bids[who], cost: c.cost, reserve: c.reserve })
                } else {
                    (0.0, 0.0)
                };
                prop_assert_eq!(alloc, full.allocation[who]);
                prop_assert!((pay - full.payment[who]).abs() <= 1e-12 * pay.abs().max(1.0));
            }
        }
    }
}
