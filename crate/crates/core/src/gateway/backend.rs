use std::time::Duration;

use serde_json::{json, Value};

use super::request::{ChatRequest, Usage};
use crate::model::{Message, Role};

/// What a backend returned for one attempt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackendReply {
    pub content: String,
    pub reasoning: Option<String>,
    pub usage: Option<Usage>,
}

impl BackendReply {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("mock backend has no response for request {0}")]
    NoFixture(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Unreachable(_) | BackendError::RateLimited { .. })
    }
}

/// A chat-completion provider.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn send(&self, model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError>;

    /// Whether calling `send` may touch the network.
    fn is_networked(&self) -> bool {
        false
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent,
        }
    }

    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    };
    match &m.media_refs {
        Some(refs) if !refs.is_empty() => {
            let mut parts = vec![json!({"type": "text", "text": m.content})];
            parts.extend(
                refs.iter()
                    .map(|r| json!({"type": "image_url", "image_url": {"url": r}})),
            );
            json!({"role": role, "content": parts})
        }
        _ => json!({"role": role, "content": m.content}),
    }
}

/// Request body in the chat-completion wire format.
pub fn wire_body(model: &str, request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": request.messages.iter().map(wire_message).collect::<Vec<_>>(),
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Pulls content, optional reasoning trace and usage out of a response body.
pub fn parse_wire_response(body: &Value) -> Result<BackendReply, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message".into()))?;
    let content = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => return Err(BackendError::Malformed(format!("content is {other}"))),
    };
    let reasoning = message
        .get("reasoning_content")
        .or_else(|| message.get("reasoning"))
        .and_then(Value::as_str)
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    let usage = body.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(BackendReply {
        content,
        reasoning,
        usage,
    })
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.endpoint)
    }

    fn is_networked(&self) -> bool {
        true
    }

    fn send(&self, model: &str, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let mut call = self.agent.post(self.url()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(wire_body(model, request))
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            return Err(BackendError::RateLimited { retry_after });
        }
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Unreachable(e.to_string()))?;
        if status >= 500 || status == 408 {
            return Err(BackendError::Unreachable(format!("status {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::Rejected { status, body });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parse_wire_response(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ModelRole;

    #[test]
    fn media_refs_become_content_parts() {
        let req = ChatRequest::new(
            ModelRole::EvalSubject,
            vec![Message::user("q").with_media(vec!["v.mp4#t=1.000".into()])],
        )
        .with_seed(Some(3));
        let body = wire_body("m", &req);
        assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "v.mp4#t=1.000");
        assert_eq!(body["seed"], 3);
    }

    #[test]
    fn text_only_message_is_plain_string() {
        let req = ChatRequest::user(ModelRole::Analyst, "hi");
        let body = wire_body("m", &req);
        assert_eq!(body["messages"][0]["content"], "hi");
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn parses_reasoning_content() {
        let body = json!({
            "choices": [{"message": {"content": "answer", "reasoning_content": "thinking"}}],
            "usage": {"prompt_tokens": 3, "completion_tokens": 5}
        });
        let r = parse_wire_response(&body).unwrap();
        assert_eq!(r.reasoning.as_deref(), Some("thinking"));
        assert_eq!(r.usage.unwrap().completion_tokens, 5);
    }

    #[test]
    fn url_joining() {
        let b = HttpBackend::new("http://h/v1/", None, Duration::from_secs(1));
        assert_eq!(b.url(), "http://h/v1/chat/completions");
        let b = HttpBackend::new("http://h/v1/chat/completions", None, Duration::from_secs(1));
        assert_eq!(b.url(), "http://h/v1/chat/completions");
    }
}
