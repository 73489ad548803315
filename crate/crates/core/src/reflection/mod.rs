//! Pre-incident history queue and post-incident reflection: an analytic model locates the
//! erroneous frame and supplies corrected decisions that are written back to memory.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{parse_decision, tags, ChatBackend, ChatRequest, ClientError, PromptSet};
use crate::decision::{ego_state_text, parse_ego_state_text, MetaAction};
use crate::memory::{ExperienceSample, InsertOutcome, MemoryBank, MemoryError, Provenance};
use crate::perception::{parse_description_text, render_description_text, PerceptionError, SceneDescription};
use crate::sim::{InfractionEvent, InfractionKind, PHYSICS_DT};

pub const QUEUE_CAPACITY: usize = 10;
/// Seconds between recorded frames.
pub const QUEUE_PERIOD: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueFrame {
    pub time: f64,
    pub description: SceneDescription,
    pub reasoning: String,
    pub action: MetaAction,
    /// Target speed in force when the decision was taken.
    pub target_speed: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueueError {
    #[error("frame at t = {time} s recorded less than {QUEUE_PERIOD} s after the previous one (t = {last} s)")]
    OutOfOrder { last: f64, time: f64 },
}

/// Ring buffer of the most recent frames, oldest first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MemoryQueue {
    frames: VecDeque<QueueFrame>,
}

impl MemoryQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, frame: QueueFrame) -> Result<(), QueueError> {
        if let Some(last) = self.frames.back() {
            if frame.time < last.time + QUEUE_PERIOD - PHYSICS_DT {
                return Err(QueueError::OutOfOrder { last: last.time, time: frame.time });
            }
        }
        if self.frames.len() == QUEUE_CAPACITY {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> impl Iterator<Item = &QueueFrame> {
        self.frames.iter()
    }

    /// Frame at a relative offset: 0 is the most recent, -1 the one before, …
    pub fn at_offset(&self, offset: i32) -> Option<&QueueFrame> {
        if offset > 0 {
            return None;
        }
        let back = (-offset) as usize;
        self.frames.len().checked_sub(1 + back).and_then(|i| self.frames.get(i))
    }

    pub fn offsets(&self) -> impl Iterator<Item = (i32, &QueueFrame)> {
        let n = self.frames.len() as i32;
        self.frames.iter().enumerate().map(move |(i, f)| (i as i32 - (n - 1), f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    /// Relative frame offset (0 = most recent).
    pub frame: i32,
    pub description: SceneDescription,
    pub reasoning: String,
    pub action: MetaAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionResult {
    pub keyframe: i32,
    pub diagnosis: String,
    pub corrections: Vec<Correction>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionError {
    #[error("reflection needs a non-empty history queue")]
    EmptyQueue,
    #[error("reflection backend failed: {0}")]
    Backend(#[from] ClientError),
    #[error("reflection skipped, unparseable reply: {reason}")]
    Unparseable { reason: String, raw: String },
    #[error("reflection prompt: {0}")]
    Prompt(String),
}

/// Audit record of one reflection call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionLog {
    pub incident: InfractionEvent,
    pub system_prompt: String,
    pub user_prompt: String,
    pub reply: Option<String>,
    pub result: Option<ReflectionResult>,
    pub error: Option<String>,
}

pub fn incident_text(e: &InfractionEvent) -> String {
    format!("{} at t = {:.2} s involving {}", e.kind, e.time, e.actor.as_deref().unwrap_or("none"))
}

pub fn parse_incident_text(s: &str) -> Option<(InfractionKind, Option<String>)> {
    let (kind, rest) = s.trim().split_once(" at t = ")?;
    let (_, actor) = rest.split_once(" involving ")?;
    let actor = (actor != "none").then(|| actor.to_string());
    Some((InfractionKind::parse(kind)?, actor))
}

const FRAME_HEADER: &str = "#### Frame ";

pub fn render_frames(queue: &MemoryQueue) -> String {
    queue
        .offsets()
        .map(|(off, f)| {
            format!(
                "{FRAME_HEADER}{off} (t = {:.2} s)\nEgo state: {}\nScene:\n{}\nReasoning: {}\nDecision: {}\n",
                f.time,
                ego_state_text(f.description.ego_speed, f.target_speed, f.steer),
                render_description_text(&f.description),
                f.reasoning.trim(),
                f.action
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_reflection_prompt(
    queue: &MemoryQueue,
    incident: &InfractionEvent,
    prompts: &PromptSet,
) -> Result<(String, String), ReflectionError> {
    let system = prompts.reflection_system_text().map_err(|e| ReflectionError::Prompt(e.to_string()))?;
    let user = prompts
        .reflection_user
        .render(&[("incident", &incident_text(incident)), ("frames", &render_frames(queue))])
        .map_err(|e| ReflectionError::Prompt(e.to_string()))?;
    Ok((system, user))
}

/// A history frame recovered from a reflection prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedFrame {
    pub offset: i32,
    pub speed: f64,
    pub target: f64,
    pub scene: SceneDescription,
    pub reasoning: String,
    pub action: MetaAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReflectionPrompt {
    pub incident: InfractionKind,
    pub actor: Option<String>,
    pub frames: Vec<ParsedFrame>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReflectionPromptError {
    #[error("reflection prompt is missing {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Scene(#[from] PerceptionError),
    #[error("frame reply: {0}")]
    Reply(String),
}

/// Inverse of [`render_reflection_prompt`]'s user message.
pub fn parse_reflection_prompt(user: &str) -> Result<ParsedReflectionPrompt, ReflectionPromptError> {
    use ReflectionPromptError::Missing;
    let incident_line = user
        .split_once("### Incident\n")
        .and_then(|(_, r)| r.lines().next())
        .ok_or(Missing("the incident"))?;
    let (incident, actor) = parse_incident_text(incident_line).ok_or(Missing("a valid incident line"))?;
    let history = user.split_once("### History\n").ok_or(Missing("the history"))?.1;
    let mut frames = Vec::new();
    for block in history.split(FRAME_HEADER).filter(|b| !b.trim().is_empty()) {
        let (header, body) = block.split_once('\n').ok_or(Missing("a frame body"))?;
        let offset: i32 = header.split_whitespace().next().and_then(|o| o.parse().ok()).ok_or(Missing("a frame offset"))?;
        let ego = body.lines().next().and_then(|l| l.strip_prefix("Ego state: ")).ok_or(Missing("a frame ego state"))?;
        let (speed, target) = parse_ego_state_text(ego).ok_or(Missing("frame speeds"))?;
        let scene_start = body.find("Scene:\n").ok_or(Missing("a frame scene"))? + "Scene:\n".len();
        let reasoning_at = body.find("\nReasoning: ").ok_or(Missing("a frame reasoning"))?;
        let scene = parse_description_text(&body[scene_start..reasoning_at], 0.0, speed)?;
        let (reasoning, action) =
            parse_decision(&body[reasoning_at + 1..]).map_err(|e| ReflectionPromptError::Reply(e.reason))?;
        frames.push(ParsedFrame { offset, speed, target, scene, reasoning, action });
    }
    if frames.is_empty() {
        return Err(Missing("history frames"));
    }
    Ok(ParsedReflectionPrompt { incident, actor, frames })
}

/// Renders a reply in the reflection grammar.
pub fn render_reflection_reply(keyframe: i32, diagnosis: &str, corrections: &[(i32, String, MetaAction)]) -> String {
    let mut out = format!("Keyframe: {keyframe}\nDiagnosis: {}\n", diagnosis.trim());
    for (frame, reasoning, action) in corrections {
        out.push_str(&format!("Correction {frame}:\nReasoning: {}\nDecision: {action}\n", reasoning.trim()));
    }
    out
}

/// Parses a reply against the queue it was produced from.
pub fn parse_reflection_reply(text: &str, queue: &MemoryQueue) -> Result<ReflectionResult, ReflectionError> {
    let err = |reason: String| ReflectionError::Unparseable { reason, raw: text.to_string() };
    let lower = text.to_ascii_lowercase();
    let key_at = lower.find("keyframe:").ok_or_else(|| err("missing 'Keyframe:'".into()))?;
    let keyframe: i32 = text[key_at + "keyframe:".len()..]
        .split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| err("keyframe is not an integer".into()))?;
    if queue.at_offset(keyframe).is_none() {
        return Err(err(format!("keyframe {keyframe} is outside the history")));
    }
    // Correction blocks start at lines of the form "Correction <offset>:".
    let mut blocks: Vec<(usize, usize, i32)> = Vec::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.get(..11).is_some_and(|p| p.eq_ignore_ascii_case("correction ")) {
            if let Some((head, _)) = trimmed[11..].split_once(':') {
                if let (Ok(frame), Some(colon)) = (head.trim().parse::<i32>(), line.find(':')) {
                    blocks.push((pos, pos + colon + 1, frame));
                }
            }
        }
        pos += line.len();
    }
    let first_correction = blocks.first().map_or(text.len(), |b| b.0);
    let diagnosis = lower
        .find("diagnosis:")
        .filter(|i| *i < first_correction)
        .map(|i| text[i + "diagnosis:".len()..first_correction].trim().to_string())
        .unwrap_or_default();

    let mut corrections = Vec::new();
    for (i, &(_, body_start, frame)) in blocks.iter().enumerate() {
        let body_end = blocks.get(i + 1).map_or(text.len(), |b| b.0);
        let f = queue.at_offset(frame).ok_or_else(|| err(format!("correction frame {frame} is outside the history")))?;
        let (reasoning, action) = parse_decision(&text[body_start..body_end]).map_err(|e| err(e.reason))?;
        corrections.push(Correction { frame, description: f.description.clone(), reasoning, action });
    }
    Ok(ReflectionResult {
        keyframe,
        diagnosis: if diagnosis.is_empty() { "(no diagnosis given)".into() } else { diagnosis },
        corrections,
    })
}

/// Asks the analytic backend to analyze the queue. The log is returned in every case that
/// reached the backend.
pub fn reflect(
    queue: &MemoryQueue,
    incident: &InfractionEvent,
    backend: &dyn ChatBackend,
    prompts: &PromptSet,
) -> Result<ReflectionLog, ReflectionError> {
    if queue.is_empty() {
        return Err(ReflectionError::EmptyQueue);
    }
    let (system, user) = render_reflection_prompt(queue, incident, prompts)?;
    let mut log = ReflectionLog {
        incident: incident.clone(),
        system_prompt: system.clone(),
        user_prompt: user.clone(),
        reply: None,
        result: None,
        error: None,
    };
    let req = ChatRequest { tag: tags::REFLECTION.into(), system, user, temperature: 0.0, max_tokens: 1024 };
    match backend.chat(&req) {
        Ok(resp) => {
            match parse_reflection_reply(&resp.text, queue) {
                Ok(r) => log.result = Some(r),
                Err(e) => log.error = Some(e.to_string()),
            }
            log.reply = Some(resp.text);
        }
        Err(e) => log.error = Some(ReflectionError::Backend(e).to_string()),
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegrationReport {
    pub inserted: usize,
    pub skipped: usize,
}

/// Inserts every corrected sample with reflection provenance.
pub fn integrate(bank: &mut MemoryBank, result: &ReflectionResult, source: &str, town: &str) -> Result<IntegrationReport, MemoryError> {
    let mut report = IntegrationReport::default();
    for c in &result.corrections {
        let sample = ExperienceSample {
            description: c.description.clone(),
            reasoning: c.reasoning.clone(),
            action: c.action,
            provenance: Provenance::Reflection,
            source: source.to_string(),
            town: town.to_string(),
            timestamp: c.description.time,
        };
        match bank.insert(sample)? {
            InsertOutcome::Inserted { .. } => report.inserted += 1,
            InsertOutcome::Skipped { .. } => report.skipped += 1,
        }
    }
    Ok(report)
}
