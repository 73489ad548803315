use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{ChatBackend, ChatRequest, ChatResponse, ClientError};

pub type Responder = Arc<dyn Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync>;

/// Offline backend: each prompt tag maps to a deterministic responder. Never touches the
/// network and always reports zero latency.
#[derive(Clone, Default)]
pub struct MockBackend {
    responders: BTreeMap<String, Responder>,
    calls: Arc<AtomicUsize>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("tags", &self.responders.keys().collect::<Vec<_>>())
            .field("calls", &self.calls())
            .finish()
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_responder(
        mut self,
        tag: &str,
        f: impl Fn(&ChatRequest) -> Result<String, ClientError> + Send + Sync + 'static,
    ) -> Self {
        self.responders.insert(tag.to_string(), Arc::new(f));
        self
    }

    pub fn with_canned(self, tag: &str, text: &str) -> Self {
        let text = text.to_string();
        self.with_responder(tag, move |_| Ok(text.clone()))
    }

    /// Number of requests answered or rejected so far, across clones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        req.validate()?;
        let responder = self.responders.get(&req.tag).ok_or_else(|| ClientError::NoResponder(req.tag.clone()))?;
        let text = responder(req)?;
        Ok(ChatResponse { text, latency_ms: 0.0, backend_id: "mock".into() })
    }
}
