use adsim_core::auction::{run_auction_with, GspNextRule, Mechanism};
use adsim_core::bidding::*;
use adsim_core::datagen::{AuctionInstance, Candidate};
use adsim_core::hierarchy::LaminarFamily;
use proptest::prelude::*;

fn hull_of(raw: &[(u32, u32)]) -> Vec<CurvePoint> {
    let mut pts = vec![CurvePoint::at(0.0, 0.0)];
    pts.extend(raw.iter().map(|&(v, s)| CurvePoint::at(v as f64 * 0.5, s as f64 * 0.5)));
    lower_convex_hull(&pts)
}

/// Best feasible total value over every combination of hull vertices.
fn exhaustive(hulls: &[Vec<CurvePoint>]) -> f64 {
    let mut best = 0.0f64;
    let mut idx = vec![0usize; hulls.len()];
    loop {
        let v: f64 = hulls.iter().zip(&idx).map(|(h, &k)| h[k].value).sum();
        let s: f64 = hulls.iter().zip(&idx).map(|(h, &k)| h[k].spend).sum();
        if v >= s {
            best = best.max(v);
        }
        let mut d = 0;
        loop {
            if d == hulls.len() {
                return best;
            }
            idx[d] += 1;
            if idx[d] < hulls[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Totals along the edge order the frontier visits: ascending gradient,
/// ties to the lower partition.
fn prefix_totals(hulls: &[Vec<CurvePoint>]) -> Vec<(f64, f64)> {
    let mut edges: Vec<(f64, usize, f64, f64)> = Vec::new();
    for (d, h) in hulls.iter().enumerate() {
        for w in h.windows(2) {
            let (dv, ds) = (w[1].value - w[0].value, w[1].spend - w[0].spend);
            edges.push((ds / dv, d, dv, ds));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = vec![(0.0, 0.0)];
    let (mut v, mut s) = (0.0, 0.0);
    for (_, _, dv, ds) in edges {
        v += dv;
        s += ds;
        out.push((v, s));
    }
    out
}

fn largest_edge(hulls: &[Vec<CurvePoint>]) -> f64 {
    hulls
        .iter()
        .flat_map(|h| h.windows(2).map(|w| w[1].value - w[0].value))
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn greedy_against_exhaustive(raw in prop::collection::vec(prop::collection::vec((1u32..40, 0u32..60), 0..6), 1..4)) {
        let hulls: Vec<Vec<CurvePoint>> = raw.iter().map(|r| hull_of(r)).collect();
        let sel = greedy_select(&hulls);
        prop_assert!(sel.value >= sel.spend);
        let v: f64 = hulls.iter().zip(&sel.index).map(|(h, &k)| h[k].value).sum();
        prop_assert_eq!(v, sel.value);

        let opt = exhaustive(&hulls);
        prop_assert!(sel.value >= opt - largest_edge(&hulls) - 1e-9, "greedy {} opt {}", sel.value, opt);
        let reachable = prefix_totals(&hulls).iter().any(|&(v, s)| v >= s && v == opt);
        if reachable {
            prop_assert_eq!(sel.value, opt);
        }
    }
}

/// One auction per query; every query has candidates `0` (the bidder) and `1`.
fn tiny_market(rival_bids: &[f64], slots: &[f64]) -> (Vec<AuctionInstance>, Vec<Vec<f64>>) {
    let instances = rival_bids
        .iter()
        .enumerate()
        .map(|(q, _)| AuctionInstance {
            query_id: q as u32,
            leaf_id: 0,
            candidates: vec![
                Candidate { advertiser: 0, value: 1.0, cost: 0.05, reserve: 0.0 },
                Candidate { advertiser: 1, value: 1.0, cost: 0.05, reserve: 0.0 },
            ],
            slot_ctrs: slots.to_vec(),
        })
        .collect::<Vec<_>>();
    let scaled = rival_bids.iter().map(|&r| vec![1.0, r]).collect();
    (instances, scaled)
}

fn outcomes(mech: Mechanism, instances: &[AuctionInstance], scaled: &[Vec<f64>], kappa: f64) -> Vec<adsim_core::auction::AuctionOutcome> {
    instances
        .iter()
        .zip(scaled)
        .map(|(inst, a)| run_auction_with(mech, GspNextRule::RankedNext, inst, &[kappa * a[0], a[1]]))
        .collect()
}

#[test]
fn level_zero_response_is_the_largest_feasible_multiplier() {
    let rivals = [0.3, 0.55, 0.8, 1.2, 1.6, 2.4, 3.1];
    let (instances, scaled) = tiny_market(&rivals, &[1.0]);
    let family = LaminarFamily::from_leaves(vec![], vec![0; rivals.len()]).unwrap();
    let entries: Vec<(usize, usize)> = (0..rivals.len()).map(|q| (q, 0)).collect();
    for mech in Mechanism::ALL {
        let outs = outcomes(mech, &instances, &scaled, 1.0);
        let view = MarketView { mechanism: mech, rule: GspNextRule::RankedNext, instances: &instances, scaled_values: &scaled, outcomes: &outs };
        let br = best_response(&view, &entries, &family, 0, &[1.0], &Discretization::Breakpoints, &UniformUpdate::default(), 1.0);

        // scan oracle: full auctions on a fine grid
        let mut best_value = 0.0f64;
        for k in 1..=4000 {
            let kappa = k as f64 * 0.001;
            let o = outcomes(mech, &instances, &scaled, kappa);
            let v: f64 = o.iter().map(|o| o.allocation[0]).sum();
            let s: f64 = o.iter().map(|o| o.payment[0]).sum();
            if v >= s - 1e-12 {
                best_value = best_value.max(v);
            }
        }
        let o = outcomes(mech, &instances, &scaled, br.target[0]);
        let v: f64 = o.iter().map(|o| o.allocation[0]).sum();
        let s: f64 = o.iter().map(|o| o.payment[0]).sum();
        assert_eq!(v, best_value, "{mech:?}");
        assert!(v >= s * (1.0 - 1e-9), "{mech:?}: value {v} spend {s}");
        assert!((br.value - v).abs() < 1e-9 && (br.spend - s).abs() < 1e-6, "{mech:?}");
    }
}

#[test]
fn undamped_step_lands_on_target_and_damped_step_interpolates() {
    let rivals = [0.4, 0.9, 1.5, 2.0];
    let (instances, scaled) = tiny_market(&rivals, &[1.0, 0.5]);
    let family = LaminarFamily::from_leaves(vec![2], vec![0, 0, 1, 1]).unwrap();
    let entries: Vec<(usize, usize)> = (0..rivals.len()).map(|q| (q, 0)).collect();
    let outs = outcomes(Mechanism::Gsp, &instances, &scaled, 1.0);
    let view = MarketView { mechanism: Mechanism::Gsp, rule: GspNextRule::RankedNext, instances: &instances, scaled_values: &scaled, outcomes: &outs };
    let full = best_response(&view, &entries, &family, 1, &[1.0, 1.0], &Discretization::Breakpoints, &UniformUpdate::default(), 1.0);
    for (k, t) in full.kappas.iter().zip(&full.target) {
        assert!((k - t).abs() <= 1e-12 * t);
    }
    let half = best_response(&view, &entries, &family, 1, &[1.0, 1.0], &Discretization::Breakpoints, &UniformUpdate::default(), 0.5);
    for (k, t) in half.kappas.iter().zip(&full.target) {
        assert!((k - (1.0 + t) / 2.0).abs() < 1e-12);
    }
}

#[test]
fn vcg_best_response_is_uniform_when_partitions_look_alike() {
    // the same rivals in both partitions: the best multipliers coincide
    let rivals = [0.4, 0.9, 1.5, 0.4, 0.9, 1.5];
    let (instances, scaled) = tiny_market(&rivals, &[1.0, 0.6]);
    let family = LaminarFamily::from_leaves(vec![2], vec![0, 0, 0, 1, 1, 1]).unwrap();
    let entries: Vec<(usize, usize)> = (0..rivals.len()).map(|q| (q, 0)).collect();
    let outs = outcomes(Mechanism::Vcg, &instances, &scaled, 1.0);
    let view = MarketView { mechanism: Mechanism::Vcg, rule: GspNextRule::RankedNext, instances: &instances, scaled_values: &scaled, outcomes: &outs };
    let br = best_response(&view, &entries, &family, 1, &[1.0, 1.0], &Discretization::Breakpoints, &UniformUpdate::default(), 1.0);
    assert_eq!(br.target[0], br.target[1]);
    assert!(br.value >= br.spend);
}

#[test]
fn grid_mode_picks_grid_multipliers() {
    let rivals = [0.3, 0.7, 1.1, 2.5];
    let (instances, scaled) = tiny_market(&rivals, &[1.0]);
    let family = LaminarFamily::from_leaves(vec![], vec![0; rivals.len()]).unwrap();
    let entries: Vec<(usize, usize)> = (0..rivals.len()).map(|q| (q, 0)).collect();
    let outs = outcomes(Mechanism::Gsp, &instances, &scaled, 1.0);
    let view = MarketView { mechanism: Mechanism::Gsp, rule: GspNextRule::RankedNext, instances: &instances, scaled_values: &scaled, outcomes: &outs };
    let disc = Discretization::log_grid(1.0 / 32.0, 32.0, 33);
    let Discretization::Grid(grid) = &disc else { unreachable!() };
    let br = best_response(&view, &entries, &family, 0, &[1.0], &disc, &UniformUpdate::default(), 1.0);
    assert!(grid.iter().any(|g| (g - br.target[0]).abs() < 1e-12), "{}", br.target[0]);
    assert_eq!(br.evaluations, (grid.len() * rivals.len()) as u64);
}
