use thiserror::Error;

use crate::geometry::{cumulative_lengths, point_at, project_onto, Projection, Vec2};

/// Spacing of the densified reference path, in meters.
pub const PATH_SPACING: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("a route needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("route waypoints must be finite")]
    NonFinite,
    #[error("route has zero length")]
    ZeroLength,
}

/// Resamples a piecewise-linear route at 1 m arc-length spacing. Both endpoints are
/// kept; the final gap is at most 1 m.
pub fn densify_route(sparse: &[Vec2]) -> Result<Vec<Vec2>, RouteError> {
    if sparse.len() < 2 {
        return Err(RouteError::TooFewWaypoints(sparse.len()));
    }
    if sparse.iter().any(|p| !p.is_finite()) {
        return Err(RouteError::NonFinite);
    }
    let cum = cumulative_lengths(sparse);
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(RouteError::ZeroLength);
    }
    let whole = (total / PATH_SPACING + 1e-9).floor() as usize;
    let mut out: Vec<Vec2> = (0..=whole).map(|k| point_at(sparse, &cum, k as f64 * PATH_SPACING).0).collect();
    let end = *sparse.last().unwrap();
    if total - whole as f64 * PATH_SPACING > 1e-9 {
        out.push(end);
    } else {
        *out.last_mut().unwrap() = end;
    }
    out[0] = sparse[0];
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteSpec {
    pub waypoints: Vec<Vec2>,
    pub points: Vec<Vec2>,
    pub length: f64,
    /// Arc length of each densified point.
    cum: Vec<f64>,
}

impl RouteSpec {
    pub fn new(waypoints: Vec<Vec2>) -> Result<Self, RouteError> {
        let points = densify_route(&waypoints)?;
        let length = *cumulative_lengths(&waypoints).last().unwrap();
        let mut cum: Vec<f64> = (0..points.len()).map(|i| i as f64 * PATH_SPACING).collect();
        *cum.last_mut().unwrap() = length;
        Ok(Self { waypoints, points, length, cum })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn s_of(&self, index: usize) -> f64 {
        self.cum[index.min(self.cum.len() - 1)]
    }

    /// Nearest path-point within `[lo, hi)`, with its distance.
    pub fn nearest_point(&self, p: Vec2, lo: usize, hi: usize) -> (usize, f64) {
        let hi = hi.min(self.points.len());
        let lo = lo.min(hi.saturating_sub(1));
        let mut best = (lo, f64::INFINITY);
        for (i, q) in self.points[lo..hi].iter().enumerate() {
            let d = p.distance(*q);
            if d < best.1 {
                best = (lo + i, d);
            }
        }
        best
    }

    /// Continuous projection onto the path segments starting in `[lo, hi)`.
    pub fn project(&self, p: Vec2, lo: usize, hi: usize) -> Projection {
        let lo = lo.min(self.points.len() - 2);
        project_onto(&self.points, &self.cum, p, lo, hi.max(lo + 1)).expect("route has at least one segment")
    }

    pub fn project_global(&self, p: Vec2) -> Projection {
        self.project(p, 0, self.points.len())
    }

    pub fn point_at(&self, s: f64) -> (Vec2, f64) {
        point_at(&self.points, &self.cum, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn straight_ten_meters() {
        let pts = densify_route(&[Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]).unwrap();
        assert_eq!(pts.len(), 11);
        for (i, p) in pts.iter().enumerate() {
            assert!((p.x - i as f64).abs() < 1e-12 && p.y == 0.0);
        }
    }

    #[test]
    fn short_segment_keeps_endpoints() {
        let pts = densify_route(&[Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.5)]).unwrap();
        assert_eq!(pts, vec![Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.5)]);
    }

    #[test]
    fn three_four_five() {
        // 5 m hypotenuse: s = 0..=5, unit gaps, endpoint exact.
        let pts = densify_route(&[Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)]).unwrap();
        assert_eq!(pts.len(), 6);
        for w in pts.windows(2) {
            assert!((w[0].distance(w[1]) - 1.0).abs() < 1e-9);
        }
        assert_eq!(*pts.last().unwrap(), Vec2::new(3.0, 4.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(densify_route(&[Vec2::ZERO]), Err(RouteError::TooFewWaypoints(1)));
        assert_eq!(densify_route(&[Vec2::ZERO, Vec2::ZERO]), Err(RouteError::ZeroLength));
    }

    /// Arc length between consecutive densified points, measured along the sparse polyline.
    fn arc_gaps(sparse: &[Vec2], dense: &[Vec2]) -> Vec<f64> {
        let cum = cumulative_lengths(sparse);
        let mut last_seg = 0;
        let s: Vec<f64> = dense
            .iter()
            .map(|p| {
                let proj = project_onto(sparse, &cum, *p, last_seg, sparse.len()).unwrap();
                last_seg = proj.segment;
                proj.s
            })
            .collect();
        s.windows(2).map(|w| w[1] - w[0]).collect()
    }

    proptest! {
        #[test]
        fn unit_arc_spacing(raw in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..6)) {
            // Keep segments well separated so projection back onto the polyline is unambiguous.
            let mut sparse = vec![Vec2::ZERO];
            for (dx, dy) in &raw {
                let step = Vec2::new(dx.abs() + 2.0, *dy);
                sparse.push(*sparse.last().unwrap() + step);
            }
            let dense = densify_route(&sparse).unwrap();
            prop_assert_eq!(dense[0], sparse[0]);
            prop_assert_eq!(*dense.last().unwrap(), *sparse.last().unwrap());
            let gaps = arc_gaps(&sparse, &dense);
            let (last, rest) = gaps.split_last().unwrap();
            for g in rest {
                prop_assert!((g - 1.0).abs() < 1e-6, "gap {}", g);
            }
            prop_assert!(*last <= 1.0 + 1e-9 && *last > 0.0);
        }
    }
}
