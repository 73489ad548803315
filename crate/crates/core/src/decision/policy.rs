//! Deterministic rule cascade standing in for a fine-tuned decision model, with a
//! memory-first override from closely matching exemplars.

use serde::{Deserialize, Serialize};

use super::{Exemplar, MetaAction};
use crate::memory::Provenance;
use crate::perception::{CameraView, CriticalObject, LaneRelation, ObjectCategory, SceneDescription};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// Within this distance of a stop sign the cascade stops, meters.
    pub stop_zone: f64,
    /// Approach zone for stop signs, meters; speed is brought down to `approach_speed` here.
    pub approach_zone: f64,
    pub approach_speed: f64,
    /// Minimum following gap; a lead closer than this forces STOP.
    pub min_gap: f64,
    /// Seconds of headway in the safety gap `max(min_gap, headway·v)`.
    pub headway: f64,
    pub cruise_speed: f64,
    /// Stop, rather than decelerate, for a closing lead inside the safety gap.
    pub closing_stop: bool,
    /// Exemplars above this similarity override the cascade.
    pub override_similarity: f64,
    /// An overriding exemplar must have been recorded within this ego speed, m/s.
    pub override_speed_tolerance: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            stop_zone: 5.0,
            approach_zone: 25.0,
            approach_speed: 3.0,
            min_gap: 5.0,
            headway: 2.0,
            cruise_speed: 6.0,
            closing_stop: false,
            override_similarity: 0.9,
            override_speed_tolerance: 1.0,
        }
    }
}

impl PolicyConfig {
    /// The stricter variant used to emulate the analytic model offline.
    pub fn analytic() -> Self {
        Self { closing_stop: true, ..Self::default() }
    }

    pub fn safety_gap(&self, speed: f64) -> f64 {
        self.min_gap.max(self.headway * speed)
    }
}

fn nearest<'a>(objects: impl Iterator<Item = &'a CriticalObject>) -> Option<&'a CriticalObject> {
    objects.min_by(|a, b| a.spatial.distance.total_cmp(&b.spatial.distance))
}

/// Road users in (or crossing into) the ego path: ahead in the front view, or anywhere in
/// view once inside the minimum gap.
fn is_lead(o: &CriticalObject, cfg: &PolicyConfig) -> bool {
    o.category.is_road_user()
        && (o.spatial.view == CameraView::Front || o.spatial.distance < cfg.min_gap)
        && (o.spatial.lane == LaneRelation::EgoLane || (o.motion.is_crossing() && o.spatial.lane != LaneRelation::Roadside))
}

/// Best overriding exemplar: highest similarity above the threshold among those recorded
/// at a comparable ego speed; exact ties go to reflection corrections.
pub fn overriding_exemplar<'a>(exemplars: &'a [Exemplar], ego_speed: f64, cfg: &PolicyConfig) -> Option<&'a Exemplar> {
    let mut best: Option<&Exemplar> = None;
    for e in exemplars {
        if e.similarity <= cfg.override_similarity
            || (e.description.ego_speed - ego_speed).abs() > cfg.override_speed_tolerance
        {
            continue;
        }
        best = match best {
            None => Some(e),
            Some(b) if e.similarity > b.similarity => Some(e),
            Some(b)
                if e.similarity == b.similarity
                    && e.provenance == Provenance::Reflection
                    && b.provenance != Provenance::Reflection =>
            {
                Some(e)
            }
            keep => keep,
        };
    }
    best
}

/// The rule cascade alone, without memory.
pub fn cascade(d: &SceneDescription, speed: f64, target: f64, cfg: &PolicyConfig) -> (String, MetaAction) {
    let objects = &d.objects;

    let light = nearest(objects.iter().filter(|o| matches!(o.category, ObjectCategory::RedLight | ObjectCategory::YellowLight)));
    if let Some(l) = light {
        let color = if l.category == ObjectCategory::RedLight { "red" } else { "yellow" };
        return (
            format!(
                "The {color} light {:.1} m ahead controls the ego direction and requires stopping at the intersection.",
                l.spatial.distance
            ),
            MetaAction::Stop,
        );
    }

    if let Some(s) = nearest(objects.iter().filter(|o| o.category == ObjectCategory::StopSign)) {
        let dist = s.spatial.distance;
        if dist <= cfg.stop_zone {
            return (format!("The stop sign is {dist:.1} m ahead; a full stop is required before the line."), MetaAction::Stop);
        }
        if dist <= cfg.approach_zone {
            let action = if target > cfg.approach_speed {
                MetaAction::Dc
            } else if target < cfg.approach_speed {
                MetaAction::Ac
            } else {
                MetaAction::Idle
            };
            return (
                format!(
                    "A stop sign is {dist:.1} m ahead; approach at about {:.0} m/s and stop within {:.0} m of it.",
                    cfg.approach_speed, cfg.stop_zone
                ),
                action,
            );
        }
    }

    if let Some(lead) = nearest(objects.iter().filter(|o| is_lead(o, cfg))) {
        let dist = lead.spatial.distance;
        let gap = cfg.safety_gap(speed);
        if dist < cfg.min_gap {
            return (
                format!("The {} ahead is only {dist:.2} m away, inside the minimum gap; stopping is necessary.", lead.category),
                MetaAction::Stop,
            );
        }
        if dist < gap {
            let closing = lead.motion == crate::perception::Motion::Toward;
            let action = if cfg.closing_stop && closing { MetaAction::Stop } else { MetaAction::Dc };
            return (
                format!(
                    "The {} ahead is {dist:.2} m away ({}), closer than the safe gap of {gap:.1} m at {speed:.1} m/s.",
                    lead.category, lead.motion
                ),
                action,
            );
        }
    }

    if speed < cfg.cruise_speed && target < cfg.cruise_speed {
        return (
            format!("No constraint ahead and the speed {speed:.1} m/s is below the cruise speed; accelerate."),
            MetaAction::Ac,
        );
    }
    ("No constraint ahead; keep the current speed.".to_string(), MetaAction::Idle)
}

/// Memory override first, then the cascade. Pure in its inputs.
pub fn builtin_policy(
    d: &SceneDescription,
    speed: f64,
    target: f64,
    exemplars: &[Exemplar],
    cfg: &PolicyConfig,
) -> (String, MetaAction) {
    if let Some(e) = overriding_exemplar(exemplars, speed, cfg) {
        return (
            format!(
                "A past experience from a matching scene (similarity {:.3}) decided {}: {}",
                e.similarity, e.action, e.reasoning
            ),
            e.action,
        );
    }
    cascade(d, speed, target, cfg)
}
