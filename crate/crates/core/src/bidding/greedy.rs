use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::hull::CurvePoint;

/// Chosen hull vertex per partition and the resulting totals.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub index: Vec<usize>,
    pub value: f64,
    pub spend: f64,
}

impl Selection {
    pub fn feasible(&self) -> bool {
        self.value >= self.spend
    }
}

/// Min-heap entry: smallest right gradient first, then lowest partition.
#[derive(Clone, Copy, Debug)]
struct Frontier {
    gradient: f64,
    partition: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.gradient.total_cmp(&self.gradient).then(other.partition.cmp(&self.partition))
    }
}

fn gradient(hull: &[CurvePoint], at: usize) -> f64 {
    let (a, b) = (hull[at], hull[at + 1]);
    (b.spend - a.spend) / (b.value - a.value)
}

/// Pushes per-partition frontiers along their lower hulls in order of
/// increasing right gradient for as long as total value covers total spend,
/// returning the last selection that did.
///
/// Every hull must be non-empty and start at the `(0, 0)` anchor; the
/// all-anchor start is then feasible and the result always is too.
pub fn greedy_select(hulls: &[Vec<CurvePoint>]) -> Selection {
    let mut index = vec![0usize; hulls.len()];
    let mut value: f64 = hulls.iter().map(|h| h[0].value).sum();
    let mut spend: f64 = hulls.iter().map(|h| h[0].spend).sum();
    debug_assert!(value >= spend, "greedy_select needs a feasible start");

    let mut queue: BinaryHeap<Frontier> = hulls
        .iter()
        .enumerate()
        .filter(|(_, h)| h.len() > 1)
        .map(|(d, h)| Frontier { gradient: gradient(h, 0), partition: d })
        .collect();

    let mut best = Selection { index: index.clone(), value, spend };
    while value >= spend {
        best = Selection { index: index.clone(), value, spend };
        let Some(top) = queue.pop() else { break };
        let d = top.partition;
        let h = &hulls[d];
        let (from, to) = (h[index[d]], h[index[d] + 1]);
        value += to.value - from.value;
        spend += to.spend - from.spend;
        index[d] += 1;
        if index[d] + 1 < h.len() {
            queue.push(Frontier { gradient: gradient(h, index[d]), partition: d });
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hull(v: &[(f64, f64)]) -> Vec<CurvePoint> {
        v.iter().map(|&(x, y)| CurvePoint::at(x, y)).collect()
    }

    #[test]
    fn two_partition_trace() {
        let hulls = vec![
            hull(&[(0.0, 0.0), (6.0, 2.0), (8.0, 7.0)]),
            hull(&[(0.0, 0.0), (4.0, 3.0), (5.0, 4.0)]),
        ];
        let s = greedy_select(&hulls);
        assert_eq!(s.index, vec![2, 2]);
        assert_eq!((s.value, s.spend), (13.0, 11.0));
        assert!(s.feasible());
    }

    #[test]
    fn stops_before_violation() {
        let s = greedy_select(&[hull(&[(0.0, 0.0), (10.0, 5.0), (20.0, 25.0)])]);
        assert_eq!(s.index, vec![1]);
        assert_eq!((s.value, s.spend), (10.0, 5.0));
    }

    #[test]
    fn all_anchors() {
        let s = greedy_select(&[hull(&[(0.0, 0.0)]), hull(&[(0.0, 0.0)])]);
        assert_eq!(s.index, vec![0, 0]);
        assert_eq!((s.value, s.spend), (0.0, 0.0));
    }

    #[test]
    fn equal_gradients_advance_lower_partition_first() {
        // both edges have gradient 2; advancing either first makes the total
        // infeasible, so the lower partition index decides what is tried
        let hulls = vec![hull(&[(0.0, 0.0), (1.0, 2.0)]), hull(&[(0.0, 0.0), (1.0, 2.0)])];
        let s = greedy_select(&hulls);
        assert_eq!(s.index, vec![0, 0]);
        let hulls = vec![
            hull(&[(0.0, 0.0), (4.0, 1.0), (5.0, 3.0)]),
            hull(&[(0.0, 0.0), (4.0, 1.0), (5.0, 3.0)]),
        ];
        // after both cheap edges (slack 6), one steep edge fits (slack 5), the second too (4)
        assert_eq!(greedy_select(&hulls).index, vec![2, 2]);
    }
}
