//! Backend-agnostic chat-completion client.
//!
//! A [`Gateway`] routes each [`ModelRole`] to a backend, caches responses by
//! request content, retries transient failures with jittered exponential
//! backoff and bounds the number of in-flight requests.

mod backend;
mod cache;
mod extract;
mod mock;
mod request;
mod sim;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde_json::Value;

pub use backend::{parse_wire_response, wire_body, Backend, BackendError, BackendReply, HttpBackend};
pub use cache::ResponseCache;
pub use extract::{answer_letter, extract_json, parse_split_point, ExtractError, SchemaId};
pub use mock::{MockBackend, Responder};
pub use request::{ChatRequest, ChatResponse, ModelRole, Usage, DEFAULT_MAX_TOKENS};
pub use sim::simulate;

use crate::model::Message;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("no backend configured for role `{0}`")]
    UnmappedRole(ModelRole),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend unreachable after {attempts} attempts: {last}")]
    BackendUnreachable { attempts: u32, last: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("backend rejected request (status {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("no mock response for request {0}")]
    NoFixture(String),
    #[error("{error} (raw output archived)")]
    Json { error: ExtractError, raw: String },
}

impl GatewayError {
    /// Configuration problems, as opposed to runtime backend failures.
    pub fn is_config(&self) -> bool {
        matches!(self, GatewayError::UnmappedRole(_) | GatewayError::InvalidRequest(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Same attempt count, no sleeping. For tests and offline runs.
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
            jitter: false,
        }
    }

    /// Delay before retry number `retry` (1-based): base * 2^(retry-1),
    /// scaled by a factor in [0.5, 1.5) when jittered.
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32 << (retry.saturating_sub(1)).min(16));
        if self.jitter && !exp.is_zero() {
            exp.mul_f64(rand::rng().random_range(0.5..1.5))
        } else {
            exp
        }
    }
}

/// Counting semaphore bounding concurrent backend calls.
#[derive(Debug)]
struct Limiter {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().expect("limiter lock");
        while *used >= self.max {
            used = self.freed.wait(used).expect("limiter lock");
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Clone)]
pub struct Route {
    pub backend: Arc<dyn Backend>,
    pub model: String,
    pub temperature: f64,
}

impl std::fmt::Debug for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Route")
            .field("backend", &self.backend.id())
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .finish()
    }
}

/// A parsed JSON reply plus the response it came from.
#[derive(Debug, Clone)]
pub struct JsonReply {
    pub value: Value,
    pub response: ChatResponse,
    /// 1 when the first reply parsed, 2 after the corrective retry.
    pub attempts: u32,
}

#[derive(Debug)]
pub struct Gateway {
    routes: BTreeMap<ModelRole, Route>,
    cache: ResponseCache,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

impl Gateway {
    pub fn new() -> Self {
        Self {
            routes: BTreeMap::new(),
            cache: ResponseCache::memory(),
            retry: RetryPolicy::default(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    /// Every role routed to one mock backend, with immediate retries.
    pub fn mock(backend: Arc<MockBackend>) -> Self {
        let mut gw = Self::new().with_retry(RetryPolicy::immediate(3));
        for role in ModelRole::ALL {
            gw = gw.with_route(role, backend.clone(), "mock");
        }
        gw
    }

    pub fn with_route(mut self, role: ModelRole, backend: Arc<dyn Backend>, model: impl Into<String>) -> Self {
        self.routes.insert(
            role,
            Route {
                backend,
                model: model.into(),
                temperature: role.default_temperature(),
            },
        );
        self
    }

    pub fn with_temperature(mut self, role: ModelRole, temperature: f64) -> Self {
        if let Some(route) = self.routes.get_mut(&role) {
            route.temperature = temperature;
        }
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache = ResponseCache::disk(dir);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, max: usize) -> Self {
        self.limiter = Limiter::new(max);
        self
    }

    pub fn max_in_flight(&self) -> usize {
        self.limiter.max
    }

    pub fn route(&self, role: ModelRole) -> Option<&Route> {
        self.routes.get(&role)
    }

    /// Whether any routed backend may touch the network.
    pub fn is_networked(&self) -> bool {
        self.routes.values().any(|r| r.backend.is_networked())
    }

    /// Configured sampling temperature for `role`.
    pub fn temperature_for(&self, role: ModelRole) -> f64 {
        self.routes
            .get(&role)
            .map_or_else(|| role.default_temperature(), |r| r.temperature)
    }

    /// A request using the role's configured temperature.
    pub fn request(&self, role: ModelRole, messages: Vec<Message>) -> ChatRequest {
        ChatRequest::new(role, messages).with_temperature(self.temperature_for(role))
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let route = self.routes.get(&req.role).ok_or(GatewayError::UnmappedRole(req.role))?;
        if req.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages are empty".into()));
        }
        if !(req.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} < 0",
                req.temperature
            )));
        }
        let key = req.cache_key();
        if let Some(mut hit) = self.cache.get(req.role, &key) {
            hit.cached = true;
            return Ok(hit);
        }

        let reply = {
            let _permit = self.limiter.acquire();
            self.send_with_retry(route, req)?
        };
        if reply.content.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        let response = ChatResponse {
            content: reply.content,
            reasoning: reply.reasoning,
            backend_id: route.backend.id(),
            cached: false,
            usage: reply.usage,
        };
        if let Err(e) = self.cache.put(req.role, &key, &response) {
            log::warn!("cache write for {} failed: {e}", req.role);
        }
        Ok(response)
    }

    fn send_with_retry(&self, route: &Route, req: &ChatRequest) -> Result<BackendReply, GatewayError> {
        let attempts = self.retry.attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let err = match route.backend.send(&route.model, req) {
                Ok(reply) => return Ok(reply),
                Err(e) => e,
            };
            if !err.is_retryable() || attempt >= attempts {
                return Err(match err {
                    BackendError::Unreachable(last) => GatewayError::BackendUnreachable {
                        attempts: attempt,
                        last,
                    },
                    BackendError::RateLimited { .. } => GatewayError::RateLimited { attempts: attempt },
                    BackendError::Rejected { status, body } => GatewayError::Rejected { status, body },
                    BackendError::Malformed(m) => GatewayError::Malformed(m),
                    BackendError::NoFixture(k) => GatewayError::NoFixture(k),
                });
            }
            let mut delay = self.retry.delay(attempt);
            if let BackendError::RateLimited {
                retry_after: Some(after),
            } = err
            {
                delay = delay.max(after);
            }
            log::debug!("{} attempt {attempt} failed ({err}); retrying in {delay:?}", req.role);
            std::thread::sleep(delay);
        }
    }

    /// Completes `req` and extracts a `schema` object from the reply. On a
    /// parse failure the conversation is extended with the bad reply and a
    /// corrective instruction, and tried once more.
    pub fn complete_json(&self, req: &ChatRequest, schema: SchemaId) -> Result<JsonReply, GatewayError> {
        let first = self.complete(req)?;
        let err = match extract_json(&first.content, schema) {
            Ok(value) => {
                return Ok(JsonReply {
                    value,
                    response: first,
                    attempts: 1,
                })
            }
            Err(e) => e,
        };
        log::debug!("{} reply failed `{schema}` extraction: {err}; retrying once", req.role);
        let mut retry = req.clone();
        retry.messages.push(Message::assistant(first.content.clone()));
        retry.messages.push(Message::user(corrective_message(schema, &err)));
        let second = self.complete(&retry)?;
        match extract_json(&second.content, schema) {
            Ok(value) => Ok(JsonReply {
                value,
                response: second,
                attempts: 2,
            }),
            Err(error) => Err(GatewayError::Json {
                error,
                raw: second.content,
            }),
        }
    }
}

fn corrective_message(schema: SchemaId, err: &ExtractError) -> String {
    format!(
        "Your previous reply could not be used: {err}. Reply again with only the JSON object \
in the required `{schema}` format and no other text."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures: usize,
        error: BackendError,
        calls: AtomicUsize,
    }

    impl Backend for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }

        fn send(&self, _: &str, _: &ChatRequest) -> Result<BackendReply, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(self.error.clone())
            } else {
                Ok(BackendReply::text("ok"))
            }
        }
    }

    fn flaky(failures: usize, error: BackendError) -> Arc<Flaky> {
        Arc::new(Flaky {
            failures,
            error,
            calls: AtomicUsize::new(0),
        })
    }

    fn gateway(backend: Arc<dyn Backend>) -> Gateway {
        Gateway::new()
            .with_retry(RetryPolicy::immediate(3))
            .with_route(ModelRole::Analyst, backend, "m")
    }

    #[test]
    fn unmapped_role_is_config_error() {
        let err = Gateway::new()
            .complete(&ChatRequest::user(ModelRole::Critic, "x"))
            .unwrap_err();
        assert_eq!(err, GatewayError::UnmappedRole(ModelRole::Critic));
        assert!(err.is_config());
    }

    #[test]
    fn transient_failures_are_retried() {
        let b = flaky(2, BackendError::Unreachable("down".into()));
        let resp = gateway(b.clone())
            .complete(&ChatRequest::user(ModelRole::Analyst, "x"))
            .unwrap();
        assert_eq!(resp.content, "ok");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let b = flaky(5, BackendError::RateLimited { retry_after: None });
        let err = gateway(b.clone())
            .complete(&ChatRequest::user(ModelRole::Analyst, "x"))
            .unwrap_err();
        assert_eq!(err, GatewayError::RateLimited { attempts: 3 });
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn rejection_is_not_retried() {
        let b = flaky(
            5,
            BackendError::Rejected {
                status: 400,
                body: "bad".into(),
            },
        );
        let err = gateway(b.clone())
            .complete(&ChatRequest::user(ModelRole::Analyst, "x"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Rejected { status: 400, .. }));
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn second_identical_request_is_cached() {
        let b = flaky(0, BackendError::Malformed(String::new()));
        let gw = gateway(b.clone());
        let req = ChatRequest::user(ModelRole::Analyst, "x");
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(first.content, second.content);
        assert_eq!(b.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn negative_temperature_rejected() {
        let b = flaky(0, BackendError::Malformed(String::new()));
        let req = ChatRequest::user(ModelRole::Analyst, "x").with_temperature(-0.1);
        assert!(matches!(
            gateway(b).complete(&req),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn backoff_doubles_without_jitter() {
        let p = RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            jitter: false,
        };
        assert_eq!(p.delay(1), Duration::from_secs(1));
        assert_eq!(p.delay(2), Duration::from_secs(2));
        let jittered = RetryPolicy::default().delay(2);
        assert!(jittered >= Duration::from_secs(1) && jittered < Duration::from_secs(3));
    }

    #[test]
    fn in_flight_bound_holds() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Backend for Slow {
            fn id(&self) -> String {
                "slow".into()
            }
            fn send(&self, _: &str, r: &ChatRequest) -> Result<BackendReply, BackendError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(5));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(BackendReply::text(r.first_user_content().to_string()))
            }
        }
        let slow = Arc::new(Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let gw = gateway(slow.clone()).with_max_in_flight(3);
        std::thread::scope(|s| {
            for i in 0..12 {
                let gw = &gw;
                s.spawn(move || {
                    gw.complete(&ChatRequest::user(ModelRole::Analyst, format!("q{i}")))
                        .unwrap()
                });
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 3);
    }

    #[test]
    fn json_failure_gets_one_corrective_retry() {
        let mock = Arc::new(MockBackend::new().with_responder(|req: &ChatRequest| {
            Some(Ok(BackendReply::text(if req.messages.len() == 1 {
                "not json"
            } else {
                "{\"Critique\": \"fine\", \"Conclusion\": \"right\"}"
            })))
        }));
        let gw = Gateway::mock(mock.clone());
        let reply = gw
            .complete_json(&ChatRequest::user(ModelRole::Critic, "judge"), SchemaId::Verdict)
            .unwrap();
        assert_eq!(reply.attempts, 2);
        assert_eq!(mock.requests().len(), 2);
    }
}
