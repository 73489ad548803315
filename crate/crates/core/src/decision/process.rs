use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::prompt::{assemble_few_shot_prompt, Exemplar, PromptContext, SystemPromptId};
use super::{builtin_policy, Decision, PolicyConfig, ProcessKind};
use crate::clients::{parse_decision, tags, ChatBackend, ChatRequest, PromptSet};
use crate::memory::MemoryBank;
use crate::perception::SceneDescription;
use crate::sim::EgoState;

/// Whether decisions report measured latency or a fixed 0 (for byte-identical logs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    #[default]
    Deterministic,
    WallClock,
}

struct Stopwatch(Option<Instant>);

impl Stopwatch {
    fn start(t: Timing) -> Self {
        Self((t == Timing::WallClock).then(Instant::now))
    }

    fn ms(&self) -> f64 {
        self.0.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3)
    }
}

/// Sends a prompt and parses the reply, retrying once on an unparseable reply.
fn chat_decision(
    backend: &dyn ChatBackend,
    req: &ChatRequest,
    process: ProcessKind,
    watch: &Stopwatch,
    exemplar_ids: Vec<u64>,
) -> Decision {
    let shots = exemplar_ids.len();
    let mut last_error = String::new();
    for attempt in 0..2 {
        match backend.chat(req) {
            Ok(resp) => match parse_decision(&resp.text) {
                Ok((reasoning, action)) => {
                    return Decision {
                        reasoning,
                        action,
                        process,
                        latency_ms: watch.ms(),
                        shots,
                        exemplar_ids,
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("{} reply unparseable (attempt {}): {}", req.tag, attempt + 1, e.reason);
                    last_error = format!("unparseable reply: {}", e.reason);
                }
            },
            Err(e) => {
                log::warn!("{} backend failed: {e}", req.tag);
                return Decision::fallback(e.to_string(), watch.ms(), shots, exemplar_ids);
            }
        }
    }
    Decision::fallback(last_error, watch.ms(), shots, exemplar_ids)
}

/// Slow process: the analytic system prompt plus the current scene, answered by a chat model.
#[derive(Clone)]
pub struct AnalyticProcess {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: Arc<PromptSet>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timing: Timing,
}

impl AnalyticProcess {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        Self { backend, prompts, temperature: 0.0, max_tokens: 512, timing: Timing::Deterministic }
    }

    pub fn decide(&self, d: &SceneDescription, ego: &EgoState) -> Decision {
        let watch = Stopwatch::start(self.timing);
        let ctx = PromptContext::new(d, ego, Vec::new(), SystemPromptId::Analytic);
        let prompt = match assemble_few_shot_prompt(&ctx, &self.prompts, usize::MAX) {
            Ok(p) => p,
            Err(e) => return Decision::fallback(e.to_string(), watch.ms(), 0, Vec::new()),
        };
        let req = ChatRequest {
            tag: tags::ANALYTIC.into(),
            system: prompt.system,
            user: prompt.user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        chat_decision(self.backend.as_ref(), &req, ProcessKind::Analytic, &watch, Vec::new())
    }
}

#[derive(Clone)]
pub enum HeuristicBackend {
    Builtin(PolicyConfig),
    Chat(Arc<dyn ChatBackend>),
}

/// Fast process: retrieves the top-k most similar experiences and decides with them.
#[derive(Clone)]
pub struct HeuristicProcess {
    pub bank: MemoryBank,
    pub k: usize,
    pub backend: HeuristicBackend,
    pub prompts: Arc<PromptSet>,
    pub max_prompt_chars: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timing: Timing,
}

impl HeuristicProcess {
    pub const DEFAULT_MAX_PROMPT_CHARS: usize = 12_000;

    pub fn new(bank: MemoryBank, k: usize, backend: HeuristicBackend, prompts: Arc<PromptSet>) -> Self {
        Self {
            bank,
            k,
            backend,
            prompts,
            max_prompt_chars: Self::DEFAULT_MAX_PROMPT_CHARS,
            temperature: 0.0,
            max_tokens: 512,
            timing: Timing::Deterministic,
        }
    }

    pub fn retrieve(&self, d: &SceneDescription) -> Result<Vec<Exemplar>, crate::memory::MemoryError> {
        Ok(self.bank.query_scene(d, self.k)?.iter().map(Exemplar::from).collect())
    }

    pub fn decide(&self, d: &SceneDescription, ego: &EgoState) -> Decision {
        let watch = Stopwatch::start(self.timing);
        let exemplars = match self.retrieve(d) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("retrieval failed: {e}");
                return Decision::fallback(format!("retrieval failed: {e}"), watch.ms(), 0, Vec::new());
            }
        };
        match &self.backend {
            HeuristicBackend::Builtin(cfg) => {
                let (reasoning, action) = builtin_policy(d, ego.speed, ego.target_speed, &exemplars, cfg);
                Decision {
                    reasoning,
                    action,
                    process: ProcessKind::Heuristic,
                    latency_ms: watch.ms(),
                    shots: exemplars.len(),
                    exemplar_ids: exemplars.iter().map(|e| e.id).collect(),
                    error: None,
                }
            }
            HeuristicBackend::Chat(backend) => {
                let ctx = PromptContext::new(d, ego, exemplars, SystemPromptId::Heuristic);
                let prompt = match assemble_few_shot_prompt(&ctx, &self.prompts, self.max_prompt_chars) {
                    Ok(p) => p,
                    Err(e) => return Decision::fallback(e.to_string(), watch.ms(), 0, Vec::new()),
                };
                let req = ChatRequest {
                    tag: tags::HEURISTIC.into(),
                    system: prompt.system,
                    user: prompt.user,
                    temperature: self.temperature,
                    max_tokens: self.max_tokens,
                };
                chat_decision(backend.as_ref(), &req, ProcessKind::Heuristic, &watch, prompt.exemplar_ids)
            }
        }
    }
}
