//! Offline stand-ins for the chat models. Each responder parses the prompt it receives
//! back into structured form and answers with the built-in policy, so the full loop —
//! analytic decisions, few-shot heuristic decisions and reflection — runs without a network.

use crate::clients::{render_decision, tags, ClientError, MockBackend};
use crate::decision::{builtin_policy, cascade, parse_decision_prompt, MetaAction, PolicyConfig};
use crate::reflection::{parse_reflection_prompt, render_reflection_reply, ParsedReflectionPrompt};

/// Answers an analytic decision prompt with the cascade under `cfg` (no memory).
pub fn analytic_reply(user: &str, cfg: &PolicyConfig) -> Result<String, ClientError> {
    let p = parse_decision_prompt(user).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let (r, s) = cascade(&p.scene, p.speed, p.target, cfg);
    Ok(render_decision(&r, s))
}

/// Answers a few-shot prompt with the built-in policy, honoring the exemplars shown.
pub fn heuristic_reply(user: &str, cfg: &PolicyConfig) -> Result<String, ClientError> {
    let p = parse_decision_prompt(user).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let (r, s) = builtin_policy(&p.scene, p.speed, p.target, &p.exemplars, cfg);
    Ok(render_decision(&r, s))
}

/// Keyframe rule: the most recent frame whose recorded decision differs from the reference
/// policy; every disagreeing frame is corrected to the reference. Without disagreement, the
/// frame where the incident actor was closest is the keyframe and its decision is made one
/// step more cautious.
pub fn reflection_analysis(p: &ParsedReflectionPrompt, cfg: &PolicyConfig) -> (i32, String, Vec<(i32, String, MetaAction)>) {
    let flagged: Vec<(i32, String, MetaAction, MetaAction)> = p
        .frames
        .iter()
        .filter_map(|f| {
            let (r, s) = cascade(&f.scene, f.speed, f.target, cfg);
            (s != f.action).then_some((f.offset, r, s, f.action))
        })
        .collect();
    if let Some(&(key, _, reference, recorded)) = flagged.iter().max_by_key(|f| f.0) {
        let diagnosis = format!(
            "Frame {key} decided {recorded} where the situation called for {reference}; {} frame(s) disagree with the \
             rules and led to the {} incident.",
            flagged.len(),
            p.incident
        );
        let corrections = flagged.into_iter().map(|(off, r, s, _)| (off, r, s)).collect();
        return (key, diagnosis, corrections);
    }

    let actor_distance = |f: &crate::reflection::ParsedFrame| {
        let actor = p.actor.as_deref()?;
        f.scene
            .objects
            .iter()
            .filter(|o| o.source_id.as_deref() == Some(actor))
            .map(|o| o.spatial.distance)
            .min_by(f64::total_cmp)
    };
    let mut key = p.frames.iter().map(|f| f.offset).max().unwrap_or(0);
    let mut best = f64::INFINITY;
    for f in &p.frames {
        if let Some(d) = actor_distance(f) {
            if d < best || (d == best && f.offset > key) {
                best = d;
                key = f.offset;
            }
        }
    }
    let frame = p.frames.iter().find(|f| f.offset == key).expect("keyframe comes from the frame list");
    let corrected = frame.action.escalate();
    let who = p.actor.as_deref().unwrap_or("the hazard");
    let reasoning = if best.is_finite() {
        format!("{who} was {best:.2} m away at this frame; a more cautious action ({corrected}) was needed to avoid the {}.", p.incident)
    } else {
        format!("The {} followed this frame; a more cautious action ({corrected}) was needed.", p.incident)
    };
    let diagnosis = format!("No decision broke the rules, but frame {key} was the last chance to act more cautiously.");
    (key, diagnosis, vec![(key, reasoning, corrected)])
}

pub fn reflection_reply(user: &str, cfg: &PolicyConfig) -> Result<String, ClientError> {
    let p = parse_reflection_prompt(user).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let (key, diagnosis, corrections) = reflection_analysis(&p, cfg);
    Ok(render_reflection_reply(key, &diagnosis, &corrections))
}

/// Mock backend answering the analytic, heuristic and reflection tags offline.
pub fn offline_backend(analytic: PolicyConfig, heuristic: PolicyConfig) -> MockBackend {
    let reflection = analytic.clone();
    MockBackend::new()
        .with_responder(tags::ANALYTIC, move |r| analytic_reply(&r.user, &analytic))
        .with_responder(tags::HEURISTIC, move |r| heuristic_reply(&r.user, &heuristic))
        .with_responder(tags::REFLECTION, move |r| reflection_reply(&r.user, &reflection))
}

/// The default offline backend: the stricter analytic rules for analysis and reflection.
pub fn default_offline_backend() -> MockBackend {
    offline_backend(PolicyConfig::analytic(), PolicyConfig::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::{ChatBackend, PromptSet};
    use crate::decision::{AnalyticProcess, ProcessKind};
    use crate::geometry::Vec2;
    use crate::perception::{
        BoundingBox, CameraView, CriticalObject, LaneRelation, Motion, ObjectCategory, SceneDescription, SpatialAttribute,
    };
    use crate::reflection::{reflect, MemoryQueue, QueueFrame};
    use crate::sim::{EgoState, InfractionEvent, InfractionKind};
    use std::sync::Arc;

    fn lead(distance: f64, motion: Motion, speed: f64, t: f64) -> SceneDescription {
        SceneDescription {
            objects: vec![CriticalObject {
                category: ObjectCategory::Vehicle,
                spatial: SpatialAttribute {
                    view: CameraView::Front,
                    bbox: BoundingBox { x1: 450, y1: 450, x2: 550, y2: 650 },
                    lane: LaneRelation::EgoLane,
                    distance,
                },
                motion,
                reason: "the road user ahead in the ego lane is closing in; keep a safe distance".into(),
                source_id: Some("lead".into()),
                position: None,
            }],
            time: t,
            ego_speed: speed,
        }
    }

    fn frame(t: f64, d: SceneDescription, action: MetaAction) -> QueueFrame {
        QueueFrame { time: t, target_speed: d.ego_speed, description: d, reasoning: "recorded".into(), action, steer: 0.0 }
    }

    fn collision() -> InfractionEvent {
        InfractionEvent { kind: InfractionKind::CollisionVehicle, time: 4.2, actor: Some("lead".into()) }
    }

    #[test]
    fn analytic_process_over_mock() {
        let p = AnalyticProcess::new(Arc::new(default_offline_backend()), Arc::new(PromptSet::builtin()));
        let ego = EgoState { position: Vec2::new(0.0, 0.0), heading: 0.0, speed: 4.0, lane: None, wheelbase: 2.5, target_speed: 4.0, steer: 0.0 };
        let d = p.decide(&lead(6.98, Motion::Toward, 4.0, 0.0), &ego);
        assert_eq!((d.action, d.process), (MetaAction::Stop, ProcessKind::Analytic));
    }

    #[test]
    fn keyframe_is_most_recent_disagreement() {
        let mut q = MemoryQueue::new();
        q.record(frame(1.0, lead(20.0, Motion::Static, 4.0, 1.0), MetaAction::Ac)).unwrap();
        q.record(frame(2.0, lead(11.0, Motion::Toward, 4.0, 2.0), MetaAction::Idle)).unwrap();
        q.record(frame(3.0, lead(6.98, Motion::Toward, 4.0, 3.0), MetaAction::Idle)).unwrap();
        q.record(frame(4.0, lead(2.5, Motion::Toward, 3.5, 4.0), MetaAction::Stop)).unwrap();
        let log = reflect(&q, &collision(), &default_offline_backend(), &PromptSet::builtin()).unwrap();
        let r = log.result.expect("parsed");
        assert_eq!(r.keyframe, -1);
        assert_eq!(r.corrections.len(), 2);
        // 11 m exceeds the 8 m gap at 4 m/s, so the rules call for AC there
        let actions: Vec<_> = r.corrections.iter().map(|c| (c.frame, c.action)).collect();
        assert_eq!(actions, vec![(-2, MetaAction::Ac), (-1, MetaAction::Stop)]);
        assert_eq!(r.corrections[1].description.objects[0].spatial.distance, 6.98);
    }

    #[test]
    fn no_disagreement_uses_closest_frame() {
        let mut q = MemoryQueue::new();
        q.record(frame(1.0, lead(30.0, Motion::Static, 6.0, 1.0), MetaAction::Idle)).unwrap();
        q.record(frame(2.0, lead(1.9, Motion::Static, 0.0, 2.0), MetaAction::Stop)).unwrap();
        q.record(frame(3.0, lead(25.0, Motion::Away, 6.0, 3.0), MetaAction::Idle)).unwrap();
        let log = reflect(&q, &collision(), &default_offline_backend(), &PromptSet::builtin()).unwrap();
        let r = log.result.unwrap();
        assert_eq!(r.keyframe, -1);
        assert_eq!(r.corrections[0].action, MetaAction::Stop);
    }

    #[test]
    fn same_request_same_reply() {
        let b = default_offline_backend();
        let mut q = MemoryQueue::new();
        q.record(frame(1.0, lead(8.0, Motion::Toward, 5.0, 1.0), MetaAction::Idle)).unwrap();
        let (s, u) = crate::reflection::render_reflection_prompt(&q, &collision(), &PromptSet::builtin()).unwrap();
        let req = crate::clients::ChatRequest::new(tags::REFLECTION, s, u);
        assert_eq!(b.chat(&req).unwrap(), b.chat(&req).unwrap());
    }
}
