//! Adapter for a vision-language model that describes camera frames in the same text
//! format the oracle renders.

use std::sync::Arc;

use super::{parse_description_text, PerceptionError, SceneDescription};
use crate::clients::{tags, ChatBackend, ChatRequest, PromptSet};

#[derive(Clone)]
pub struct VlmDescriber {
    pub backend: Arc<dyn ChatBackend>,
    pub prompts: Arc<PromptSet>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl VlmDescriber {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        Self { backend, prompts, temperature: 0.0, max_tokens: 1024 }
    }

    /// `image` is an opaque reference (path or URL) understood by the backend.
    pub fn describe(&self, image: &str, time: f64, ego_speed: f64) -> Result<SceneDescription, PerceptionError> {
        let speed = format!("{ego_speed:.2}");
        let user = self
            .prompts
            .vlm_user
            .render(&[("image", image), ("ego_speed", &speed)])
            .map_err(|e| PerceptionError::Backend(e.to_string()))?;
        let req = ChatRequest {
            tag: tags::VLM.into(),
            system: self.prompts.vlm_system.text.clone(),
            user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let resp = self.backend.chat(&req).map_err(|e| PerceptionError::Backend(e.to_string()))?;
        parse_description_text(&resp.text, time, ego_speed)
    }
}
