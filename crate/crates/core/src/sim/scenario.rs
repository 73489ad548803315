//! Scenario files: TOML documents describing the lane graph, signals, actors, ego start
//! and sparse route.
//!
//! ```toml
//! format_version = 1
//! id = "straight_npc"
//! town = "desk01"
//!
//! [ego]
//! position = [0.0, 0.0]
//! heading = 0.0
//!
//! [route]
//! waypoints = [[0.0, 0.0], [200.0, 0.0]]
//!
//! [[lanes]]
//! id = "main"
//! centerline = [[-10.0, 0.0], [220.0, 0.0]]
//!
//! [[actors]]
//! id = "lead"
//! kind = "vehicle"
//! lane = "main"
//! start_s = 40.0
//! speed_profile = [[0.0, 5.0]]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::sim::map::{Lane, LaneGraph, Phase, StopSign, TrafficLight};
use crate::sim::route::{RouteError, RouteSpec};
use crate::sim::world::ActorKind;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported scenario format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid { field: field.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub position: Vec2,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub speed: f64,
    #[serde(default = "default_wheelbase")]
    pub wheelbase: f64,
    #[serde(default)]
    pub target_speed: f64,
}

fn default_wheelbase() -> f64 {
    2.5
}

fn default_lane_width() -> f64 {
    3.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSection {
    pub waypoints: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: String,
    pub centerline: Vec<Vec2>,
    #[serde(default = "default_lane_width")]
    pub width: f64,
    #[serde(default)]
    pub successors: Vec<String>,
    #[serde(default)]
    pub left: Option<String>,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub junction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub id: String,
    pub position: Vec2,
    pub lanes: Vec<String>,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSignSpec {
    pub id: String,
    pub position: Vec2,
    pub lane: String,
}

/// An NPC. Its path is either explicit or a lane centerline starting at `start_s`.
/// `speed_profile` holds `[t, speed]` keys, linearly interpolated and held past the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub id: String,
    pub kind: ActorKind,
    #[serde(default)]
    pub lane: Option<String>,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub path: Option<Vec<Vec2>>,
    pub speed_profile: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropSpec {
    pub id: String,
    pub position: Vec2,
    #[serde(default = "default_prop_radius")]
    pub radius: f64,
}

fn default_prop_radius() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format_version: u32,
    pub id: String,
    #[serde(default = "default_town")]
    pub town: String,
    #[serde(default)]
    pub description: String,
    /// Half-width (m) of the seed-driven jitter applied to actor start positions.
    #[serde(default)]
    pub jitter: f64,
    /// Overrides the default route timeout, in seconds of sim time.
    #[serde(default)]
    pub timeout: Option<f64>,
    pub ego: EgoSpec,
    pub route: RouteSection,
    pub lanes: Vec<LaneSpec>,
    #[serde(default)]
    pub lights: Vec<LightSpec>,
    #[serde(default)]
    pub stop_signs: Vec<StopSignSpec>,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub props: Vec<PropSpec>,
}

fn default_town() -> String {
    "default".into()
}

/// A validated scenario: the parsed file plus derived map and route.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub map: LaneGraph,
    pub route: RouteSpec,
    /// Resolved actor paths, aligned with `file.actors`.
    pub actor_paths: Vec<Vec<Vec2>>,
}

impl Scenario {
    pub fn id(&self) -> &str {
        &self.file.id
    }

    pub fn town(&self) -> &str {
        &self.file.town
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|span| line_col(text, span.start)).unwrap_or((0, 0));
        ScenarioError::Parse { line, column, message: e.message().to_string() }
    })?;
    Scenario::from_file(file)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.format_version != SCENARIO_FORMAT_VERSION {
            return Err(ScenarioError::Version { found: file.format_version, expected: SCENARIO_FORMAT_VERSION });
        }
        if file.id.trim().is_empty() {
            return Err(ScenarioError::invalid("id", "must be non-empty"));
        }
        if !(file.jitter >= 0.0) {
            return Err(ScenarioError::invalid("jitter", "must be >= 0"));
        }
        if file.timeout.is_some_and(|t| !(t > 0.0)) {
            return Err(ScenarioError::invalid("timeout", "must be positive"));
        }
        let ego = &file.ego;
        if !(ego.wheelbase > 0.0) {
            return Err(ScenarioError::invalid("ego.wheelbase", "wheelbase must be > 0"));
        }
        if !(ego.speed >= 0.0) || !(ego.target_speed >= 0.0) {
            return Err(ScenarioError::invalid("ego.speed", "speeds must be >= 0"));
        }
        if !ego.position.is_finite() || !ego.heading.is_finite() {
            return Err(ScenarioError::invalid("ego.position", "must be finite"));
        }

        let lanes = file
            .lanes
            .iter()
            .map(|l| Lane::new(l.id.clone(), l.centerline.clone(), l.width, l.successors.clone(), l.left.clone(), l.right.clone(), l.junction))
            .collect();
        let lights = file
            .lights
            .iter()
            .map(|l| TrafficLight { id: l.id.clone(), position: l.position, lanes: l.lanes.clone(), phases: l.phases.clone() })
            .collect();
        let signs = file
            .stop_signs
            .iter()
            .map(|s| StopSign { id: s.id.clone(), position: s.position, lane: s.lane.clone() })
            .collect();
        let map = LaneGraph::new(lanes, lights, signs);
        if file.lanes.is_empty() {
            return Err(ScenarioError::invalid("lanes", "at least one lane is required"));
        }
        map.validate().map_err(|reason| ScenarioError::invalid("lanes", reason))?;

        let route = RouteSpec::new(file.route.waypoints.clone()).map_err(|e: RouteError| ScenarioError::invalid("route.waypoints", e.to_string()))?;

        let mut actor_paths = Vec::with_capacity(file.actors.len());
        let mut seen = std::collections::HashSet::new();
        for (i, actor) in file.actors.iter().enumerate() {
            let field = format!("actors[{i}]");
            if !seen.insert(actor.id.as_str()) {
                return Err(ScenarioError::invalid(field, format!("duplicate actor id '{}'", actor.id)));
            }
            let path = match (&actor.path, &actor.lane) {
                (Some(p), None) => p.clone(),
                (None, Some(lane_id)) => {
                    let lane = map
                        .lane(lane_id)
                        .ok_or_else(|| ScenarioError::invalid(&field, format!("unknown lane '{lane_id}'")))?;
                    lane_path_from(lane, actor.start_s)
                        .ok_or_else(|| ScenarioError::invalid(&field, "start_s lies outside the lane"))?
                }
                _ => return Err(ScenarioError::invalid(field, "exactly one of `path` or `lane` is required")),
            };
            if path.len() < 2 || path.windows(2).any(|w| w[0] == w[1]) || path.iter().any(|p| !p.is_finite()) {
                return Err(ScenarioError::invalid(field, "path needs >= 2 distinct finite points"));
            }
            if actor.speed_profile.is_empty() {
                return Err(ScenarioError::invalid(field, "speed_profile must be non-empty"));
            }
            if actor.speed_profile.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return Err(ScenarioError::invalid(field, "speed_profile times must be strictly increasing"));
            }
            if actor.speed_profile.iter().any(|k| !(k[1] >= 0.0) || !k[0].is_finite()) {
                return Err(ScenarioError::invalid(field, "speed_profile speeds must be >= 0"));
            }
            actor_paths.push(path);
        }
        for (i, prop) in file.props.iter().enumerate() {
            if !(prop.radius > 0.0) {
                return Err(ScenarioError::invalid(format!("props[{i}]"), "radius must be > 0"));
            }
        }
        Ok(Self { file, map, route, actor_paths })
    }
}

/// Remainder of a lane centerline from arc length `start_s`.
fn lane_path_from(lane: &Lane, start_s: f64) -> Option<Vec<Vec2>> {
    if !(0.0..lane.length()).contains(&start_s) {
        return None;
    }
    let cum = crate::geometry::cumulative_lengths(&lane.centerline);
    let (start, _) = crate::geometry::point_at(&lane.centerline, &cum, start_s);
    let mut out = vec![start];
    out.extend(lane.centerline.iter().zip(&cum).filter(|(_, &s)| s > start_s + 1e-9).map(|(p, _)| *p));
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRAIGHT: &str = r#"
format_version = 1
id = "straight"
[ego]
position = [0.0, 0.0]
[route]
waypoints = [[0.0, 0.0], [200.0, 0.0]]
[[lanes]]
id = "main"
centerline = [[-10.0, 0.0], [220.0, 0.0]]
[[actors]]
id = "npc"
kind = "vehicle"
lane = "main"
start_s = 50.0
speed_profile = [[0.0, 4.0]]
"#;

    #[test]
    fn parses_straight_scenario() {
        let s = parse_scenario(STRAIGHT).unwrap();
        assert_eq!(s.file.actors.len(), 1);
        assert_eq!(s.route.length, 200.0);
        assert_eq!(s.actor_paths[0][0], Vec2::new(40.0, 0.0));
    }

    #[test]
    fn reports_line_of_parse_error() {
        let bad = STRAIGHT.replace("start_s = 50.0", "start_s = \"fifty\"");
        match parse_scenario(&bad) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 15),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_lane_is_validation_error() {
        let bad = STRAIGHT.replace("lane = \"main\"", "lane = \"ghost\"");
        let err = parse_scenario(&bad).unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { ref reason, .. } if reason.contains("ghost")), "{err}");
    }

    #[test]
    fn wrong_version_rejected() {
        let bad = STRAIGHT.replace("format_version = 1", "format_version = 7");
        assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Version { found: 7, .. })));
    }
}
