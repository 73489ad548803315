//! Planar vector math and polyline helpers shared by the simulator, perception and control.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product; positive when `other` is counter-clockwise of `self`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Expresses `self` in a frame rotated by `heading` (x forward, y left).
    pub fn to_local(self, heading: f64) -> Vec2 {
        let (s, c) = heading.sin_cos();
        Vec2::new(c * self.x + s * self.y, -s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Index of the segment start point.
    pub segment: usize,
    /// Arc length from the polyline start to the projected point.
    pub s: f64,
    pub point: Vec2,
    pub distance: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Direction of the segment at the projection.
    pub heading: f64,
}

/// Cumulative arc length at every vertex.
pub fn cumulative_lengths(points: &[Vec2]) -> Vec<f64> {
    let mut acc = Vec::with_capacity(points.len());
    let mut s = 0.0;
    acc.push(0.0);
    for w in points.windows(2) {
        s += w[0].distance(w[1]);
        acc.push(s);
    }
    acc
}

/// Projects `p` onto the segments `[from, to)` of `points`. `cum` must come from
/// [`cumulative_lengths`] for the same polyline.
pub fn project_onto(points: &[Vec2], cum: &[f64], p: Vec2, from: usize, to: usize) -> Option<Projection> {
    let last_seg = points.len().checked_sub(1)?;
    let to = to.min(last_seg);
    let mut best: Option<Projection> = None;
    for i in from..to {
        let a = points[i];
        let b = points[i + 1];
        let ab = b - a;
        let len2 = ab.dot(ab);
        if len2 == 0.0 {
            continue;
        }
        let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
        let q = a + ab * t;
        let d = p.distance(q);
        if best.is_none_or(|b| d < b.distance) {
            let len = len2.sqrt();
            best = Some(Projection {
                segment: i,
                s: cum[i] + t * len,
                point: q,
                distance: d,
                lateral: ab.cross(p - a) / len,
                heading: ab.angle(),
            });
        }
    }
    best
}

/// Point and heading at arc length `s`, clamped to the polyline ends.
pub fn point_at(points: &[Vec2], cum: &[f64], s: f64) -> (Vec2, f64) {
    debug_assert!(points.len() >= 2);
    let total = *cum.last().unwrap();
    let s = s.clamp(0.0, total);
    let seg = match cum.binary_search_by(|c| c.total_cmp(&s)) {
        Ok(i) => i.min(points.len() - 2),
        Err(i) => i.saturating_sub(1).min(points.len() - 2),
    };
    let a = points[seg];
    let b = points[seg + 1];
    let len = cum[seg + 1] - cum[seg];
    let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
    (a + (b - a) * t, (b - a).angle())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5 - 2.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn projection_lateral_sign() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)];
        let cum = cumulative_lengths(&pts);
        let left = project_onto(&pts, &cum, Vec2::new(4.0, 1.5), 0, 1).unwrap();
        assert!((left.s - 4.0).abs() < 1e-12);
        assert!((left.lateral - 1.5).abs() < 1e-12);
        let right = project_onto(&pts, &cum, Vec2::new(4.0, -2.0), 0, 1).unwrap();
        assert!((right.lateral + 2.0).abs() < 1e-12);
    }

    #[test]
    fn point_at_interpolates() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0), Vec2::new(3.0, 10.0)];
        let cum = cumulative_lengths(&pts);
        let (p, h) = point_at(&pts, &cum, 7.0);
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 6.0).abs() < 1e-12);
        assert!((h - PI / 2.0).abs() < 1e-12);
        let (end, _) = point_at(&pts, &cum, 100.0);
        assert_eq!(end, Vec2::new(3.0, 10.0));
    }

    #[test]
    fn to_local_rotates() {
        let v = Vec2::new(0.0, 1.0).to_local(PI / 2.0);
        assert!((v.x - 1.0).abs() < 1e-12 && v.y.abs() < 1e-12);
    }
}
