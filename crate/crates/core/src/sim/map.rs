use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{cumulative_lengths, project_onto, wrap_angle, Projection, Vec2};

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub centerline: Vec<Vec2>,
    pub width: f64,
    pub successors: Vec<String>,
    pub left: Option<String>,
    pub right: Option<String>,
    /// Lanes inside an intersection box.
    pub junction: bool,
    cum: Vec<f64>,
}

impl Lane {
    pub fn new(
        id: impl Into<String>,
        centerline: Vec<Vec2>,
        width: f64,
        successors: Vec<String>,
        left: Option<String>,
        right: Option<String>,
        junction: bool,
    ) -> Self {
        let cum = cumulative_lengths(&centerline);
        Self { id: id.into(), centerline, width, successors, left, right, junction, cum }
    }

    pub fn length(&self) -> f64 {
        self.cum.last().copied().unwrap_or(0.0)
    }

    pub fn project(&self, p: Vec2) -> Option<Projection> {
        project_onto(&self.centerline, &self.cum, p, 0, self.centerline.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightColor {
    Red,
    Yellow,
    Green,
}

impl LightColor {
    pub fn as_str(self) -> &'static str {
        match self {
            LightColor::Red => "red",
            LightColor::Yellow => "yellow",
            LightColor::Green => "green",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub color: LightColor,
    pub duration: f64,
}

/// A traffic light. `position` is the stop-line point on the controlled lane.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLight {
    pub id: String,
    pub position: Vec2,
    pub lanes: Vec<String>,
    /// Cyclic schedule starting at t = 0 with the first phase.
    pub phases: Vec<Phase>,
}

impl TrafficLight {
    pub fn cycle(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn color_at(&self, t: f64) -> LightColor {
        let cycle = self.cycle();
        let mut rem = if cycle > 0.0 { t.max(0.0).rem_euclid(cycle) } else { 0.0 };
        for phase in &self.phases {
            if rem < phase.duration {
                return phase.color;
            }
            rem -= phase.duration;
        }
        self.phases.last().map(|p| p.color).unwrap_or(LightColor::Green)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopSign {
    pub id: String,
    pub position: Vec2,
    pub lane: String,
}

/// Result of locating a point on the lane graph.
#[derive(Debug, Clone, Copy)]
pub struct LaneMatch<'a> {
    pub lane: &'a Lane,
    pub projection: Projection,
}

#[derive(Debug, Clone, Default)]
pub struct LaneGraph {
    lanes: Vec<Lane>,
    index: HashMap<String, usize>,
    pub lights: Vec<TrafficLight>,
    pub stop_signs: Vec<StopSign>,
}

impl LaneGraph {
    pub fn new(lanes: Vec<Lane>, lights: Vec<TrafficLight>, stop_signs: Vec<StopSign>) -> Self {
        let index = lanes.iter().enumerate().map(|(i, l)| (l.id.clone(), i)).collect();
        Self { lanes, index, lights, stop_signs }
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.index.get(id).map(|&i| &self.lanes[i])
    }

    /// Lane containing `p` (within half its width). With a heading, lanes whose
    /// direction is within 90 degrees of it are preferred.
    pub fn locate(&self, p: Vec2, heading: Option<f64>) -> Option<LaneMatch<'_>> {
        let mut best: Option<(bool, LaneMatch<'_>)> = None;
        for lane in &self.lanes {
            let Some(proj) = lane.project(p) else { continue };
            if proj.distance > lane.width / 2.0 {
                continue;
            }
            let aligned = heading.is_none_or(|h| wrap_angle(h - proj.heading).abs() < std::f64::consts::FRAC_PI_2);
            let better = match &best {
                None => true,
                Some((best_aligned, m)) => {
                    (aligned && !best_aligned) || (aligned == *best_aligned && proj.distance < m.projection.distance)
                }
            };
            if better {
                best = Some((aligned, LaneMatch { lane, projection: proj }));
            }
        }
        best.map(|(_, m)| m)
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.index.len() != self.lanes.len() {
            return Err("lane ids must be unique".into());
        }
        for lane in &self.lanes {
            if lane.centerline.len() < 2 {
                return Err(format!("lane '{}': centerline needs at least 2 points", lane.id));
            }
            if lane.centerline.iter().any(|p| !p.is_finite()) {
                return Err(format!("lane '{}': centerline has non-finite coordinates", lane.id));
            }
            if lane.centerline.windows(2).any(|w| w[0] == w[1]) {
                return Err(format!("lane '{}': consecutive centerline points must be distinct", lane.id));
            }
            if !(lane.width > 0.0) {
                return Err(format!("lane '{}': width must be positive", lane.id));
            }
            for succ in &lane.successors {
                if self.lane(succ).is_none() {
                    return Err(format!("lane '{}': unknown successor lane '{succ}'", lane.id));
                }
            }
            for nb in lane.left.iter().chain(lane.right.iter()) {
                let Some(other) = self.lane(nb) else {
                    return Err(format!("lane '{}': unknown neighbor lane '{nb}'", lane.id));
                };
                let back = other.left.as_deref() == Some(lane.id.as_str())
                    || other.right.as_deref() == Some(lane.id.as_str());
                if !back {
                    return Err(format!("lane '{}': neighbor '{nb}' does not reference it back", lane.id));
                }
            }
        }
        for light in &self.lights {
            if light.lanes.is_empty() {
                return Err(format!("traffic light '{}': controls no lanes", light.id));
            }
            if let Some(bad) = light.lanes.iter().find(|l| self.lane(l).is_none()) {
                return Err(format!("traffic light '{}': unknown lane '{bad}'", light.id));
            }
            if light.phases.is_empty() || light.phases.iter().any(|p| !(p.duration > 0.0)) {
                return Err(format!("traffic light '{}': phases must be non-empty with positive durations", light.id));
            }
        }
        for sign in &self.stop_signs {
            if self.lane(&sign.lane).is_none() {
                return Err(format!("stop sign '{}': unknown lane '{}'", sign.id, sign.lane));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(id: &str, y: f64) -> Lane {
        Lane::new(id, vec![Vec2::new(0.0, y), Vec2::new(100.0, y)], 3.5, vec![], None, None, false)
    }

    #[test]
    fn light_schedule_cycles() {
        let light = TrafficLight {
            id: "tl".into(),
            position: Vec2::ZERO,
            lanes: vec!["a".into()],
            phases: vec![
                Phase { color: LightColor::Red, duration: 5.0 },
                Phase { color: LightColor::Green, duration: 4.0 },
                Phase { color: LightColor::Yellow, duration: 1.0 },
            ],
        };
        assert_eq!(light.color_at(0.0), LightColor::Red);
        assert_eq!(light.color_at(4.99), LightColor::Red);
        assert_eq!(light.color_at(5.0), LightColor::Green);
        assert_eq!(light.color_at(9.5), LightColor::Yellow);
        assert_eq!(light.color_at(10.0), LightColor::Red);
    }

    #[test]
    fn asymmetric_neighbors_rejected() {
        let mut a = straight("a", 0.0);
        a.left = Some("b".into());
        let b = straight("b", 3.5);
        let g = LaneGraph::new(vec![a, b], vec![], vec![]);
        assert!(g.validate().unwrap_err().contains("does not reference it back"));
    }

    #[test]
    fn locate_prefers_aligned_lane() {
        let a = straight("a", 0.0);
        let mut b = Lane::new("b", vec![Vec2::new(100.0, 1.0), Vec2::new(0.0, 1.0)], 3.5, vec![], None, None, false);
        b.width = 4.0;
        let g = LaneGraph::new(vec![a, b], vec![], vec![]);
        let m = g.locate(Vec2::new(50.0, 0.9), Some(0.0)).unwrap();
        assert_eq!(m.lane.id, "a");
        let m = g.locate(Vec2::new(50.0, 0.9), Some(std::f64::consts::PI)).unwrap();
        assert_eq!(m.lane.id, "b");
        assert!(g.locate(Vec2::new(50.0, 10.0), None).is_none());
    }
}
