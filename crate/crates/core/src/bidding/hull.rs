use serde::{Deserialize, Serialize};

/// One candidate operating point of a partition: total value and spend at
/// `kappa_min`, and the range of multipliers that keeps the same allocation.
/// Inside that range spend grows by `spend_per_kappa` per unit of multiplier
/// (non-zero only for first-price payments).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    pub spend: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub spend_per_kappa: f64,
}

impl CurvePoint {
    /// A point with no multiplier attached (tests, oracles).
    pub fn at(value: f64, spend: f64) -> Self {
        CurvePoint { value, spend, kappa_min: 0.0, kappa_max: f64::INFINITY, spend_per_kappa: 0.0 }
    }
}

#[inline]
fn cross(o: &CurvePoint, a: &CurvePoint, b: &CurvePoint) -> f64 {
    (a.value - o.value) * (b.spend - o.spend) - (a.spend - o.spend) * (b.value - o.value)
}

/// Lower convex hull in the (value, spend) plane, ascending by value.
///
/// Among points with equal value only the cheapest survives, and collinear
/// interior points are dropped, so consecutive slopes strictly increase.
pub fn lower_convex_hull(points: &[CurvePoint]) -> Vec<CurvePoint> {
    let mut sorted: Vec<CurvePoint> = points.to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.spend.total_cmp(&b.spend)));
    sorted.dedup_by(|later, earlier| later.value == earlier.value);

    let mut hull: Vec<CurvePoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], &p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<CurvePoint> {
        v.iter().map(|&(x, y)| CurvePoint::at(x, y)).collect()
    }

    fn coords(h: &[CurvePoint]) -> Vec<(f64, f64)> {
        h.iter().map(|p| (p.value, p.spend)).collect()
    }

    #[test]
    fn drops_point_above_chord() {
        let h = lower_convex_hull(&pts(&[(0.0, 0.0), (4.0, 1.0), (5.0, 4.0), (10.0, 14.0)]));
        assert_eq!(coords(&h), vec![(0.0, 0.0), (4.0, 1.0), (10.0, 14.0)]);
    }

    #[test]
    fn small_inputs() {
        assert_eq!(coords(&lower_convex_hull(&pts(&[(1.0, 2.0)]))), vec![(1.0, 2.0)]);
        assert_eq!(coords(&lower_convex_hull(&pts(&[(3.0, 1.0), (0.0, 0.0)]))), vec![(0.0, 0.0), (3.0, 1.0)]);
    }

    #[test]
    fn collinear_keeps_endpoints() {
        let h = lower_convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]));
        assert_eq!(coords(&h), vec![(0.0, 0.0), (2.0, 2.0)]);
    }

    #[test]
    fn duplicate_values_keep_cheapest() {
        let h = lower_convex_hull(&pts(&[(0.0, 0.0), (2.0, 5.0), (2.0, 1.0), (3.0, 4.0)]));
        assert_eq!(coords(&h), vec![(0.0, 0.0), (2.0, 1.0), (3.0, 4.0)]);
    }

    /// Brute force: a point is a lower-hull vertex iff no chord between two
    /// other points (or the point itself as duplicate) passes on or below it.
    fn brute_force_vertices(points: &[CurvePoint]) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, p) in points.iter().enumerate() {
            let dominated_dup = points
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && q.value == p.value && (q.spend < p.spend || (q.spend == p.spend && j < i)));
            if dominated_dup {
                continue;
            }
            let mut on_or_above_chord = false;
            for a in points {
                for b in points {
                    if a.value < p.value && p.value < b.value {
                        let t = (p.value - a.value) / (b.value - a.value);
                        let chord = a.spend + t * (b.spend - a.spend);
                        if p.spend >= chord {
                            on_or_above_chord = true;
                        }
                    }
                }
            }
            if !on_or_above_chord {
                out.push((p.value, p.spend));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    proptest! {
        #[test]
        fn hull_matches_brute_force(raw in proptest::collection::vec((0u32..20, 0u32..40), 1..12)) {
            let points: Vec<CurvePoint> = raw.iter().map(|&(v, s)| CurvePoint::at(v as f64, s as f64)).collect();
            let hull = lower_convex_hull(&points);
            prop_assert_eq!(coords(&hull), brute_force_vertices(&points));
            for w in hull.windows(3) {
                let s1 = (w[1].spend - w[0].spend) / (w[1].value - w[0].value);
                let s2 = (w[2].spend - w[1].spend) / (w[2].value - w[1].value);
                prop_assert!(s1 < s2);
            }
            // every input point lies on or above the hull polyline
            for p in &points {
                if let Some(k) = hull.windows(2).position(|w| w[0].value <= p.value && p.value <= w[1].value) {
                    let (a, b) = (hull[k], hull[k + 1]);
                    let chord = a.spend + (p.value - a.value) / (b.value - a.value) * (b.spend - a.spend);
                    prop_assert!(p.spend >= chord - 1e-9);
                }
            }
        }
    }
}
