use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::PenaltyTable;
use super::HarnessError;
use crate::clients::{build_backend, BackendConfig, ChatBackend, HttpEmbedder, PromptSet};
use crate::control::ControlConfig;
use crate::decision::{PolicyConfig, Timing};
use crate::memory::{HashEncoder, MemoryBank, TextEncoder};
use crate::mock_analytic::default_offline_backend;
use crate::perception::PerceptionConfig;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionMode {
    /// Fast process with retrieved exemplars.
    #[default]
    Heuristic,
    /// Slow process on every decision.
    Analytic,
    /// No decisions: hold the scenario's initial target speed (controller-only runs).
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeuristicKind {
    /// Deterministic rule cascade with memory override.
    #[default]
    Builtin,
    /// A chat model prompted with the few-shot exemplars.
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub mode: DecisionMode,
    /// Few-shot count for the heuristic process.
    pub k: usize,
    pub heuristic: HeuristicKind,
    pub policy: PolicyConfig,
    /// Reflect on every infraction using the analytic backend.
    pub reflection: bool,
    pub timing: Timing,
    pub max_prompt_chars: usize,
    pub control: ControlConfig,
    pub perception: PerceptionConfig,
    pub sim: SimConfig,
    pub penalties: PenaltyTable,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            mode: DecisionMode::Heuristic,
            k: 3,
            heuristic: HeuristicKind::Builtin,
            policy: PolicyConfig::default(),
            reflection: true,
            timing: Timing::Deterministic,
            max_prompt_chars: crate::decision::HeuristicProcess::DEFAULT_MAX_PROMPT_CHARS,
            control: ControlConfig::default(),
            perception: PerceptionConfig::default(),
            sim: SimConfig::default(),
            penalties: PenaltyTable::default(),
        }
    }
}

impl AgentConfig {
    pub fn analytic() -> Self {
        Self { mode: DecisionMode::Analytic, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.penalties.validate()?;
        if !(self.control.v_max > 0.0) {
            return Err(HarnessError::Config("control.v_max must be positive".into()));
        }
        if (self.control.dt - crate::sim::PHYSICS_DT).abs() > 1e-12 {
            return Err(HarnessError::Config(format!("control.dt must equal the physics step {}", crate::sim::PHYSICS_DT)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Offline hashed bag of caption tokens.
    #[default]
    Hash,
    /// Remote embedding endpoint.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub backend: BackendConfig,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { kind: EncoderKind::Hash, dim: HashEncoder::DEFAULT_DIM, backend: BackendConfig::default() }
    }
}

pub fn build_encoder(cfg: &EncoderConfig) -> Result<Arc<dyn TextEncoder>, HarnessError> {
    if cfg.dim == 0 {
        return Err(HarnessError::Config("encoder.dim must be positive".into()));
    }
    Ok(match cfg.kind {
        EncoderKind::Hash => Arc::new(HashEncoder::new(cfg.dim)),
        EncoderKind::Http => Arc::new(HttpEmbedder::new(cfg.backend.clone(), cfg.dim)?),
    })
}

/// Everything that determines a run's results, serialized into the run directory and
/// hashed into its fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub agent: AgentConfig,
    pub analytic_backend: BackendConfig,
    pub heuristic_backend: BackendConfig,
    pub encoder: EncoderConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            agent: AgentConfig::default(),
            analytic_backend: BackendConfig::default(),
            heuristic_backend: BackendConfig::default(),
            encoder: EncoderConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("at least one seed is required".into()));
        }
        self.agent.validate()?;
        self.analytic_backend.validate()?;
        self.heuristic_backend.validate()?;
        Ok(())
    }

    /// Short hex digest of the configuration plus any extra experiment parameters.
    pub fn fingerprint(&self, extra: &str) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("run config serializes to JSON"));
        h.update(b"\n");
        h.update(extra.as_bytes());
        hex::encode(h.finalize())[..12].to_string()
    }
}

/// Shared, read-only inputs of a route: the memory snapshot, backends and prompts.
#[derive(Clone)]
pub struct AgentContext {
    pub bank: MemoryBank,
    pub analytic: Arc<dyn ChatBackend>,
    /// Chat backend for the heuristic process when it is not the built-in policy.
    pub heuristic: Arc<dyn ChatBackend>,
    pub prompts: Arc<PromptSet>,
}

impl AgentContext {
    /// Built-in encoder, empty bank, offline mock backends and bundled prompts.
    pub fn offline() -> Self {
        let mock: Arc<dyn ChatBackend> = Arc::new(default_offline_backend());
        Self {
            bank: MemoryBank::new(Arc::new(HashEncoder::new(HashEncoder::DEFAULT_DIM))),
            analytic: mock.clone(),
            heuristic: mock,
            prompts: Arc::new(PromptSet::builtin()),
        }
    }

    /// Backends from configuration; mock kinds resolve to the offline responders.
    pub fn from_config(cfg: &RunConfig, bank: MemoryBank, prompts: PromptSet) -> Result<Self, HarnessError> {
        let mock: Arc<dyn ChatBackend> = Arc::new(default_offline_backend());
        Ok(Self {
            bank,
            analytic: build_backend(&cfg.analytic_backend, mock.clone())?,
            heuristic: build_backend(&cfg.heuristic_backend, mock)?,
            prompts: Arc::new(prompts),
        })
    }

    pub fn with_bank(mut self, bank: MemoryBank) -> Self {
        self.bank = bank;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_and_stable_fingerprint() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint("x"), cfg.fingerprint("x"));
        assert_ne!(cfg.fingerprint("x"), cfg.fingerprint("y"));
        assert_eq!(cfg.fingerprint("").len(), 12);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = RunConfig::from_toml("seeds = [7]\n[agent]\nk = 1\n").unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.agent.k, 1);
        assert_eq!(cfg.agent.penalties, PenaltyTable::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[agent]\nfew_shots = 3\n").is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig { seeds: vec![], ..RunConfig::default() }.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.agent.control.dt = 0.1;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }
}
