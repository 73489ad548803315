//! Scene description: the critical objects around the ego, each with semantic, spatial and
//! motion attributes plus a one-line behavioral reason.
//!
//! [`describe_scene`] is an oracle that applies fixed selection rules to ground-truth world
//! state. [`vlm::VlmDescriber`] is the adapter for a vision-language model that returns
//! the same text format parsed by [`parse_description_text`].

mod render;
pub mod vlm;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use render::{parse_description_text, render_description_text, NO_OBJECTS_TEXT};

use crate::geometry::{wrap_angle, Vec2};
use crate::sim::{ActorKind, LightColor, World};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PerceptionError {
    #[error("description line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("scene describer backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectCategory {
    Vehicle,
    Cyclist,
    Pedestrian,
    RedLight,
    YellowLight,
    GreenLight,
    StopSign,
}

impl ObjectCategory {
    pub const ALL: [ObjectCategory; 7] = [
        ObjectCategory::Vehicle,
        ObjectCategory::Cyclist,
        ObjectCategory::Pedestrian,
        ObjectCategory::RedLight,
        ObjectCategory::YellowLight,
        ObjectCategory::GreenLight,
        ObjectCategory::StopSign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectCategory::Vehicle => "vehicle",
            ObjectCategory::Cyclist => "cyclist",
            ObjectCategory::Pedestrian => "pedestrian",
            ObjectCategory::RedLight => "red_light",
            ObjectCategory::YellowLight => "yellow_light",
            ObjectCategory::GreenLight => "green_light",
            ObjectCategory::StopSign => "stop_sign",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    pub fn from_actor(kind: ActorKind) -> Self {
        match kind {
            ActorKind::Vehicle => ObjectCategory::Vehicle,
            ActorKind::Cyclist => ObjectCategory::Cyclist,
            ActorKind::Pedestrian => ObjectCategory::Pedestrian,
        }
    }

    pub fn from_light(color: LightColor) -> Self {
        match color {
            LightColor::Red => ObjectCategory::RedLight,
            LightColor::Yellow => ObjectCategory::YellowLight,
            LightColor::Green => ObjectCategory::GreenLight,
        }
    }

    pub fn is_road_user(self) -> bool {
        matches!(self, ObjectCategory::Vehicle | ObjectCategory::Cyclist | ObjectCategory::Pedestrian)
    }
}

impl fmt::Display for ObjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

macro_rules! label_enum {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn parse(s: &str) -> Option<Self> {
                Self::ALL.iter().copied().find(|v| v.as_str() == s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

label_enum!(CameraView { Front => "front", Left => "left", Right => "right" });
label_enum!(LaneRelation {
    EgoLane => "ego_lane",
    LeftLane => "left_lane",
    RightLane => "right_lane",
    Junction => "junction",
    Roadside => "roadside",
});
label_enum!(Motion {
    Toward => "toward",
    Away => "away",
    CrossingLeft => "crossing_left",
    CrossingRight => "crossing_right",
    Static => "static",
});

impl Motion {
    pub fn is_crossing(self) -> bool {
        matches!(self, Motion::CrossingLeft | Motion::CrossingRight)
    }
}

/// Normalized image box in 0..=1000 coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialAttribute {
    pub view: CameraView,
    pub bbox: BoundingBox,
    pub lane: LaneRelation,
    /// Center-to-center distance from the ego, meters.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalObject {
    pub category: ObjectCategory,
    pub spatial: SpatialAttribute,
    pub motion: Motion,
    pub reason: String,
    /// Simulator id, known only to the oracle describer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
    /// World position, known only to the oracle describer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneDescription {
    pub objects: Vec<CriticalObject>,
    pub time: f64,
    pub ego_speed: f64,
}

impl SceneDescription {
    pub fn empty(time: f64, ego_speed: f64) -> Self {
        Self { objects: Vec::new(), time, ego_speed }
    }

    /// Objects sorted by ascending distance; ties by category, then id.
    pub fn sorted_objects(&self) -> Vec<&CriticalObject> {
        let mut v: Vec<_> = self.objects.iter().collect();
        v.sort_by(|a, b| {
            a.spatial
                .distance
                .total_cmp(&b.spatial.distance)
                .then(a.category.cmp(&b.category))
                .then(a.source_id.cmp(&b.source_id))
        });
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Vehicles and cyclists within this radius are critical.
    pub near_radius: f64,
    /// Vehicles and cyclists in the ego lane within this distance are critical.
    pub ego_lane_range: f64,
    pub pedestrian_range: f64,
    /// Range for traffic lights and stop signs on the route.
    pub infrastructure_range: f64,
    /// Objects with |bearing| above this (rad) are behind the ego and ignored.
    pub fov_half_angle: f64,
    /// Relative speeds below this are reported as static.
    pub static_speed: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            near_radius: 20.0,
            ego_lane_range: 60.0,
            pedestrian_range: 40.0,
            infrastructure_range: 50.0,
            fov_half_angle: 135f64.to_radians(),
            static_speed: 0.5,
        }
    }
}

/// Route-relative lane relation of a world point.
pub fn lane_relation(world: &World, p: Vec2) -> LaneRelation {
    let route = &world.route;
    let base = world.furthest_index();
    let proj = route.project(p, base.saturating_sub(60), base + 120);
    let half_width = world
        .map
        .locate(proj.point, Some(proj.heading))
        .map_or(1.75, |m| m.lane.width / 2.0);
    let at_end = proj.s <= 0.0 || proj.s >= route.length;
    if proj.distance <= half_width && !at_end {
        return LaneRelation::EgoLane;
    }
    match world.map.locate(p, None) {
        Some(m) if m.lane.junction => LaneRelation::Junction,
        Some(_) if proj.lateral > 0.0 => LaneRelation::LeftLane,
        Some(_) => LaneRelation::RightLane,
        None => LaneRelation::Roadside,
    }
}

fn camera_view(bearing: f64) -> CameraView {
    if bearing.abs() <= PI / 4.0 {
        CameraView::Front
    } else if bearing > 0.0 {
        CameraView::Left
    } else {
        CameraView::Right
    }
}

fn placeholder_box(bearing: f64, distance: f64, radius: f64, fov_half: f64) -> BoundingBox {
    let span = 2.0 * fov_half;
    let u = 0.5 - bearing / span;
    let half_w = (radius.atan2(distance.max(0.1)) / span).max(0.002);
    let half_h = ((1.5f64).atan2(distance.max(0.1)) / PI).max(0.002);
    let v = 0.55;
    let q = |x: f64| (x.clamp(0.0, 1.0) * 1000.0).round() as u16;
    BoundingBox { x1: q(u - half_w), y1: q(v - half_h), x2: q(u + half_w), y2: q(v + half_h) }
}

/// Motion of an object relative to the ego, from both velocities and the line of sight.
pub fn classify_motion(rel: Vec2, object_velocity: Vec2, ego_velocity: Vec2, ego_heading: f64, static_speed: f64) -> Motion {
    let own = object_velocity.to_local(ego_heading);
    if object_velocity.norm() > static_speed && own.y.abs() > own.x.abs() {
        return if own.y > 0.0 { Motion::CrossingLeft } else { Motion::CrossingRight };
    }
    let v_rel = object_velocity - ego_velocity;
    let dist = rel.norm();
    if v_rel.norm() < static_speed || dist == 0.0 {
        return Motion::Static;
    }
    if v_rel.dot(rel) / dist < 0.0 {
        Motion::Toward
    } else {
        Motion::Away
    }
}

/// Behavioral reason attached to an object, from a fixed rule table.
pub fn reason_for(category: ObjectCategory, lane: LaneRelation, motion: Motion) -> String {
    let text = match (category, lane, motion) {
        (ObjectCategory::RedLight, _, _) => "the red light controls the ego direction and requires stopping at the intersection",
        (ObjectCategory::YellowLight, _, _) => "the light is about to turn red; prepare to stop before the stop line",
        (ObjectCategory::GreenLight, _, _) => "the green light allows the ego to proceed through the intersection",
        (ObjectCategory::StopSign, _, _) => "the stop sign requires a full stop before entering the intersection",
        (ObjectCategory::Pedestrian, _, m) if m.is_crossing() => "the pedestrian is crossing and may enter the ego path",
        (ObjectCategory::Pedestrian, LaneRelation::EgoLane, _) => "the pedestrian is in the ego lane and blocks the path",
        (ObjectCategory::Pedestrian, _, _) => "the pedestrian is near the road and may step into the ego path",
        (_, _, m) if m.is_crossing() => "the road user is crossing the ego path",
        (_, LaneRelation::EgoLane, Motion::Toward) => "the road user ahead in the ego lane is closing in; keep a safe distance",
        (_, LaneRelation::EgoLane, _) => "the road user ahead in the ego lane limits the safe following speed",
        (_, LaneRelation::Junction, _) => "the road user in the junction may conflict with the ego path",
        (_, LaneRelation::LeftLane | LaneRelation::RightLane, Motion::Toward) => "the road user in the adjacent lane is approaching",
        (_, _, _) => "the road user is close to the ego vehicle and may change lanes",
    };
    text.to_string()
}

/// Applies the critical-object selection rules to the world's ground truth.
pub fn describe_scene(world: &World, cfg: &PerceptionConfig) -> SceneDescription {
    let ego = &world.ego;
    let ego_velocity = Vec2::from_angle(ego.heading) * ego.speed;
    let mut objects: Vec<CriticalObject> = Vec::new();

    let in_view = |rel: Vec2| wrap_angle(rel.angle() - ego.heading).abs() <= cfg.fov_half_angle;

    let push = |objects: &mut Vec<CriticalObject>, category, position: Vec2, lane, motion, radius: f64, id: &str| {
        if objects.iter().any(|o| o.category == category && o.position == Some(position)) {
            return;
        }
        let rel = position - ego.position;
        let distance = rel.norm();
        let bearing = wrap_angle(rel.angle() - ego.heading);
        objects.push(CriticalObject {
            category,
            spatial: SpatialAttribute {
                view: camera_view(bearing),
                bbox: placeholder_box(bearing, distance, radius, cfg.fov_half_angle),
                lane,
                distance,
            },
            motion,
            reason: reason_for(category, lane, motion),
            source_id: Some(id.to_string()),
            position: Some(position),
        });
    };

    for actor in &world.actors {
        let rel = actor.position - ego.position;
        if !in_view(rel) {
            continue;
        }
        let distance = rel.norm();
        let lane = lane_relation(world, actor.position);
        let selected = match actor.kind {
            ActorKind::Vehicle | ActorKind::Cyclist => {
                distance <= cfg.near_radius || (lane == LaneRelation::EgoLane && distance <= cfg.ego_lane_range)
            }
            ActorKind::Pedestrian => distance <= cfg.pedestrian_range,
        };
        if !selected {
            continue;
        }
        let motion = classify_motion(rel, actor.velocity(), ego_velocity, ego.heading, cfg.static_speed);
        let radius = world.config.radius(actor.kind);
        push(&mut objects, ObjectCategory::from_actor(actor.kind), actor.position, lane, motion, radius, &actor.id);
    }

    let ego_s = world.ego_route_s();
    for rl in &world.route_lights {
        let light = &world.map.lights[rl.light];
        let rel = light.position - ego.position;
        if rl.route_s > ego_s && rel.norm() <= cfg.infrastructure_range && in_view(rel) {
            let category = ObjectCategory::from_light(world.light_color(rl.light));
            push(&mut objects, category, light.position, LaneRelation::EgoLane, Motion::Static, 0.3, &light.id);
        }
    }
    for rs in &world.route_stops {
        let sign = &world.map.stop_signs[rs.sign];
        let rel = sign.position - ego.position;
        if world.pending_stop(rs.sign) && rel.norm() <= cfg.infrastructure_range && in_view(rel) {
            push(&mut objects, ObjectCategory::StopSign, sign.position, LaneRelation::EgoLane, Motion::Static, 0.3, &sign.id);
        }
    }

    objects.sort_by(|a, b| {
        a.spatial
            .distance
            .total_cmp(&b.spatial.distance)
            .then(a.category.cmp(&b.category))
            .then(a.source_id.cmp(&b.source_id))
    });
    SceneDescription { objects, time: world.time, ego_speed: ego.speed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{parse_scenario, SimConfig};

    fn two_lane_world(actors: &str) -> World {
        let text = format!(
            r#"
format_version = 1
id = "p"
[ego]
position = [0.0, 0.0]
[route]
waypoints = [[0.0, 0.0], [200.0, 0.0]]
[[lanes]]
id = "main"
centerline = [[-50.0, 0.0], [250.0, 0.0]]
left = "other"
[[lanes]]
id = "other"
centerline = [[-50.0, 3.5], [250.0, 3.5]]
right = "main"
{actors}
"#
        );
        World::new(&parse_scenario(&text).unwrap(), 0, SimConfig::default())
    }

    fn actor(id: &str, kind: &str, x: f64, y: f64) -> String {
        format!(
            "[[actors]]\nid = \"{id}\"\nkind = \"{kind}\"\npath = [[{x}, {y}], [{}, {y}]]\nspeed_profile = [[0.0, 0.0]]\n",
            x + 1.0
        )
    }

    fn ids(d: &SceneDescription) -> Vec<String> {
        d.objects.iter().filter_map(|o| o.source_id.clone()).collect()
    }

    #[test]
    fn ego_lane_vehicle_at_45m_included() {
        let w = two_lane_world(&actor("v", "vehicle", 45.0, 0.0));
        let d = describe_scene(&w, &PerceptionConfig::default());
        assert_eq!(ids(&d), vec!["v"]);
        assert_eq!(d.objects[0].spatial.lane, LaneRelation::EgoLane);
    }

    #[test]
    fn pedestrian_at_45m_excluded() {
        let w = two_lane_world(&actor("p", "pedestrian", 45.0, 0.0));
        assert!(describe_scene(&w, &PerceptionConfig::default()).objects.is_empty());
    }

    #[test]
    fn adjacent_vehicle_at_25m_excluded() {
        let x = (25.0f64.powi(2) - 3.5f64.powi(2)).sqrt();
        let w = two_lane_world(&actor("v", "vehicle", x, 3.5));
        assert!(describe_scene(&w, &PerceptionConfig::default()).objects.is_empty());
        let w = two_lane_world(&actor("v", "vehicle", 15.0, 3.5));
        let d = describe_scene(&w, &PerceptionConfig::default());
        assert_eq!(d.objects[0].spatial.lane, LaneRelation::LeftLane);
    }

    #[test]
    fn rear_objects_excluded() {
        let w = two_lane_world(&actor("v", "vehicle", -5.0, 0.0));
        assert!(describe_scene(&w, &PerceptionConfig::default()).objects.is_empty());
    }

    #[test]
    fn threshold_is_inclusive() {
        let w = two_lane_world(&actor("p", "pedestrian", 40.0, 0.0));
        assert_eq!(describe_scene(&w, &PerceptionConfig::default()).objects.len(), 1);
        let w = two_lane_world(&actor("p", "pedestrian", 40.01, 0.0));
        assert!(describe_scene(&w, &PerceptionConfig::default()).objects.is_empty());
    }

    #[test]
    fn motion_classes() {
        let ego_v = Vec2::new(5.0, 0.0);
        let ahead = Vec2::new(10.0, 0.0);
        assert_eq!(classify_motion(ahead, Vec2::new(5.0, 0.0), ego_v, 0.0, 0.5), Motion::Static);
        assert_eq!(classify_motion(ahead, Vec2::new(2.0, 0.0), ego_v, 0.0, 0.5), Motion::Toward);
        assert_eq!(classify_motion(ahead, Vec2::new(8.0, 0.0), ego_v, 0.0, 0.5), Motion::Away);
        assert_eq!(classify_motion(ahead, Vec2::new(0.0, 1.2), ego_v, 0.0, 0.5), Motion::CrossingLeft);
        assert_eq!(classify_motion(ahead, Vec2::new(0.0, -1.2), ego_v, 0.0, 0.5), Motion::CrossingRight);
    }

    #[test]
    fn red_light_reason_mentions_stopping() {
        let r = reason_for(ObjectCategory::RedLight, LaneRelation::EgoLane, Motion::Static);
        assert!(r.contains("requires stopping at the intersection"));
    }
}
