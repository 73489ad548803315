//! Dual-process decision making: a slow analytic process backed by a chat model and a fast
//! heuristic process prompted with retrieved experiences (or the built-in policy).

mod action;
mod policy;
mod process;
mod prompt;

use serde::{Deserialize, Serialize};

pub use action::{MetaAction, UnknownAction};
pub use policy::{builtin_policy, cascade, overriding_exemplar, PolicyConfig};
pub use process::{AnalyticProcess, HeuristicBackend, HeuristicProcess, Timing};
pub use prompt::{
    assemble_few_shot_prompt, ego_state_text, ego_text, parse_decision_prompt, parse_ego_state_text, AssembledPrompt,
    Exemplar, ParsedDecisionPrompt, PromptContext, PromptParseError, SystemPromptId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Analytic,
    Heuristic,
    Fallback,
}

impl ProcessKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProcessKind::Analytic => "analytic",
            ProcessKind::Heuristic => "heuristic",
            ProcessKind::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub reasoning: String,
    pub action: MetaAction,
    pub process: ProcessKind,
    pub latency_ms: f64,
    /// Exemplars actually shown to the process.
    pub shots: usize,
    pub exemplar_ids: Vec<u64>,
    /// Why the fallback was taken, if it was.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Decision {
    pub const FALLBACK_REASONING: &'static str = "The decision backend failed; stopping is the fail-safe action.";

    pub fn fallback(error: String, latency_ms: f64, shots: usize, exemplar_ids: Vec<u64>) -> Self {
        Self {
            reasoning: Self::FALLBACK_REASONING.to_string(),
            action: MetaAction::Stop,
            process: ProcessKind::Fallback,
            latency_ms,
            shots,
            exemplar_ids,
            error: Some(error),
        }
    }
}
