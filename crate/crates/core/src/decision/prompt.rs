//! Decision prompt assembly and its inverse (used by the offline mock backends).

use serde::{Deserialize, Serialize};

use super::MetaAction;
use crate::clients::{PromptError, PromptSet};
use crate::memory::{Provenance, Retrieved};
use crate::perception::{parse_description_text, render_description_text, PerceptionError, SceneDescription};
use crate::sim::EgoState;

/// A retrieved experience as shown to a decision process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: u64,
    pub similarity: f64,
    pub description: SceneDescription,
    pub reasoning: String,
    pub action: MetaAction,
    pub provenance: Provenance,
}

impl From<&Retrieved<'_>> for Exemplar {
    fn from(r: &Retrieved<'_>) -> Self {
        let s = &r.entry.sample;
        Exemplar {
            id: r.entry.id,
            similarity: r.similarity,
            description: s.description.clone(),
            reasoning: s.reasoning.clone(),
            action: s.action,
            provenance: s.provenance,
        }
    }
}

pub fn ego_state_text(speed: f64, target: f64, steer: f64) -> String {
    format!("speed {speed:.2} m/s, target speed {target:.2} m/s, steering {steer:.2}")
}

pub fn ego_text(ego: &EgoState) -> String {
    ego_state_text(ego.speed, ego.target_speed, ego.steer)
}

/// Inverse of [`ego_state_text`]: `(speed, target)`.
pub fn parse_ego_state_text(s: &str) -> Option<(f64, f64)> {
    let rest = s.trim().strip_prefix("speed ")?;
    let (speed, rest) = rest.split_once(" m/s, target speed ")?;
    let (target, _) = rest.split_once(" m/s")?;
    Some((speed.parse().ok()?, target.parse().ok()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemPromptId {
    Analytic,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub scene_text: String,
    pub ego_text: String,
    /// Kept in descending-similarity order by [`assemble_few_shot_prompt`].
    pub exemplars: Vec<Exemplar>,
    pub system: SystemPromptId,
}

impl PromptContext {
    pub fn new(d: &SceneDescription, ego: &EgoState, exemplars: Vec<Exemplar>, system: SystemPromptId) -> Self {
        Self { scene_text: render_description_text(d), ego_text: ego_text(ego), exemplars, system }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    pub system: String,
    pub user: String,
    pub exemplar_ids: Vec<u64>,
}

impl AssembledPrompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }

    pub fn len(&self) -> usize {
        self.system.len() + 2 + self.user.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

const EXAMPLE_HEADER: &str = "### Example ";

fn render_exemplar(i: usize, e: &Exemplar) -> String {
    format!(
        "{EXAMPLE_HEADER}{i} (similarity {:.4}, ego speed {:.2} m/s, provenance {}, id {})\nScene:\n{}\nReasoning: {}\nDecision: {}\n\n",
        e.similarity,
        e.description.ego_speed,
        e.provenance.as_str(),
        e.id,
        render_description_text(&e.description),
        e.reasoning.trim(),
        e.action
    )
}

/// System prompt, then exemplars (descending similarity), then the current scene. When the
/// text exceeds `max_chars`, the lowest-similarity exemplars are dropped first; the current
/// scene is always kept.
pub fn assemble_few_shot_prompt(ctx: &PromptContext, prompts: &PromptSet, max_chars: usize) -> Result<AssembledPrompt, PromptError> {
    let system = match ctx.system {
        SystemPromptId::Analytic => prompts.analytic_system_text()?,
        SystemPromptId::Heuristic => prompts.heuristic_system_text()?,
    };
    let mut exemplars = ctx.exemplars.clone();
    exemplars.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    loop {
        let examples: String = exemplars.iter().enumerate().map(|(i, e)| render_exemplar(i + 1, e)).collect();
        let user = prompts.decision_user.render(&[
            ("examples", &examples),
            ("ego_state", &ctx.ego_text),
            ("scene", &ctx.scene_text),
        ])?;
        let p = AssembledPrompt { system: system.clone(), user, exemplar_ids: exemplars.iter().map(|e| e.id).collect() };
        if p.len() <= max_chars || exemplars.is_empty() {
            return Ok(p);
        }
        exemplars.pop();
    }
}

/// What a decision prompt carries, recovered from its user message.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDecisionPrompt {
    pub speed: f64,
    pub target: f64,
    pub scene: SceneDescription,
    pub exemplars: Vec<Exemplar>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptParseError {
    #[error("prompt is missing '{0}'")]
    Missing(&'static str),
    #[error("bad exemplar header '{0}'")]
    ExemplarHeader(String),
    #[error(transparent)]
    Scene(#[from] PerceptionError),
    #[error("exemplar reply: {0}")]
    Reply(String),
}

fn parse_exemplar(block: &str) -> Result<Exemplar, PromptParseError> {
    let (header, body) = block.split_once('\n').ok_or(PromptParseError::Missing("exemplar body"))?;
    let bad = || PromptParseError::ExemplarHeader(header.to_string());
    let inner = header.split_once('(').and_then(|(_, r)| r.strip_suffix(')')).ok_or_else(bad)?;
    let mut similarity = None;
    let mut speed = None;
    let mut provenance = None;
    let mut id = None;
    for field in inner.split(", ") {
        if let Some(v) = field.strip_prefix("similarity ") {
            similarity = v.parse::<f64>().ok();
        } else if let Some(v) = field.strip_prefix("ego speed ") {
            speed = v.strip_suffix(" m/s").and_then(|v| v.parse::<f64>().ok());
        } else if let Some(v) = field.strip_prefix("provenance ") {
            provenance = match v {
                "analytic" => Some(Provenance::Analytic),
                "reflection" => Some(Provenance::Reflection),
                _ => None,
            };
        } else if let Some(v) = field.strip_prefix("id ") {
            id = v.parse::<u64>().ok();
        }
    }
    let (similarity, speed, provenance, id) =
        (similarity.ok_or_else(bad)?, speed.ok_or_else(bad)?, provenance.ok_or_else(bad)?, id.ok_or_else(bad)?);
    let body = body.strip_prefix("Scene:\n").ok_or(PromptParseError::Missing("exemplar Scene:"))?;
    let split = body.find("\nReasoning: ").ok_or(PromptParseError::Missing("exemplar Reasoning:"))?;
    let scene = parse_description_text(&body[..split], 0.0, speed)?;
    let (reasoning, action) =
        crate::clients::parse_decision(&body[split + 1..]).map_err(|e| PromptParseError::Reply(e.reason))?;
    Ok(Exemplar { id, similarity, description: scene, reasoning, action, provenance })
}

/// Inverse of [`assemble_few_shot_prompt`] for the user message.
pub fn parse_decision_prompt(user: &str) -> Result<ParsedDecisionPrompt, PromptParseError> {
    let current = user.find("### Current scene").ok_or(PromptParseError::Missing("### Current scene"))?;
    let (examples, current) = user.split_at(current);
    let ego_line = current
        .lines()
        .find_map(|l| l.strip_prefix("Ego state: "))
        .ok_or(PromptParseError::Missing("Ego state:"))?;
    let (speed, target) = parse_ego_state_text(ego_line).ok_or(PromptParseError::Missing("ego speed and target"))?;
    let scene_text = current.split_once("\nScene:\n").ok_or(PromptParseError::Missing("Scene:"))?.1;
    let scene = parse_description_text(scene_text.trim_end(), 0.0, speed)?;
    let exemplars = examples
        .split(EXAMPLE_HEADER)
        .filter(|b| !b.trim().is_empty())
        .map(|b| parse_exemplar(b.trim_end()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ParsedDecisionPrompt { speed, target, scene, exemplars })
}
