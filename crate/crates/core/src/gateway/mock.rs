use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Deserialize;

use super::backend::{Backend, BackendError, BackendReply};
use super::request::ChatRequest;

/// Scripted reply hook; `None` falls through to the next lookup step.
pub type Responder = Arc<dyn Fn(&ChatRequest) -> Option<Result<BackendReply, BackendError>> + Send + Sync>;

/// Offline backend. Lookup order: fixture keyed by request hash, then the
/// responder, then (if enabled) the heuristic simulator.
pub struct MockBackend {
    fixtures: BTreeMap<String, BackendReply>,
    responder: Option<Responder>,
    simulate: bool,
    latency: Duration,
    log: Mutex<Vec<ChatRequest>>,
}

impl std::fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockBackend")
            .field("fixtures", &self.fixtures.len())
            .field("responder", &self.responder.is_some())
            .field("simulate", &self.simulate)
            .finish()
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FixtureEntry {
    Text(String),
    Full {
        content: String,
        #[serde(default)]
        reasoning: Option<String>,
    },
}

impl MockBackend {
    /// Empty mock: every request fails with `NoFixture`.
    pub fn new() -> Self {
        Self {
            fixtures: BTreeMap::new(),
            responder: None,
            simulate: false,
            latency: Duration::ZERO,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Mock answering every stage prompt with the built-in simulator.
    pub fn simulated() -> Self {
        Self::new().with_simulation(true)
    }

    pub fn with_fixture(mut self, key: impl Into<String>, reply: BackendReply) -> Self {
        self.fixtures.insert(key.into(), reply);
        self
    }

    /// Loads `{ "<hash>": "content" | {"content": .., "reasoning": ..} }`.
    pub fn with_fixture_file(mut self, path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let entries: BTreeMap<String, FixtureEntry> = serde_json::from_str(&text).map_err(std::io::Error::other)?;
        for (key, entry) in entries {
            let reply = match entry {
                FixtureEntry::Text(content) => BackendReply::text(content),
                FixtureEntry::Full { content, reasoning } => BackendReply {
                    content,
                    reasoning,
                    usage: None,
                },
            };
            self.fixtures.insert(key, reply);
        }
        Ok(self)
    }

    pub fn with_responder<F>(mut self, f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Option<Result<BackendReply, BackendError>> + Send + Sync + 'static,
    {
        self.responder = Some(Arc::new(f));
        self
    }

    pub fn with_simulation(mut self, on: bool) -> Self {
        self.simulate = on;
        self
    }

    /// Artificial per-call latency, used by the throughput benches.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log").clone()
    }

    pub fn clear_requests(&self) {
        self.log.lock().expect("mock log").clear();
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn send(&self, _model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.log.lock().expect("mock log").push(request.clone());
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let key = request.cache_key();
        if let Some(reply) = self.fixtures.get(&key) {
            return Ok(reply.clone());
        }
        if let Some(responder) = &self.responder {
            if let Some(result) = responder(request) {
                return result;
            }
        }
        if self.simulate {
            if let Some(reply) = super::sim::simulate(request) {
                return Ok(reply);
            }
        }
        Err(BackendError::NoFixture(key))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ModelRole};

    #[test]
    fn fixture_by_hash() {
        let req = ChatRequest::user(ModelRole::Analyst, "hello");
        let mock = MockBackend::new().with_fixture(req.cache_key(), BackendReply::text("fixture reply"));
        let gw = Gateway::mock(Arc::new(mock));
        assert_eq!(gw.complete(&req).unwrap().content, "fixture reply");
    }

    #[test]
    fn missing_fixture_is_an_error() {
        let gw = Gateway::mock(Arc::new(MockBackend::new()));
        let err = gw.complete(&ChatRequest::user(ModelRole::Analyst, "x")).unwrap_err();
        assert!(matches!(err, crate::gateway::GatewayError::NoFixture(_)));
    }

    #[test]
    fn fixture_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fx.json");
        std::fs::write(&path, r#"{"k1": "plain", "k2": {"content": "c", "reasoning": "r"}}"#).unwrap();
        let mock = MockBackend::new().with_fixture_file(&path).unwrap();
        assert_eq!(mock.fixtures["k1"].content, "plain");
        assert_eq!(mock.fixtures["k2"].reasoning.as_deref(), Some("r"));
    }
}
