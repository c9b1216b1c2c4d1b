use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::Message;

/// Which model a pipeline stage talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Captioner,
    Analyst,
    Splitter,
    Reasoner,
    Rewriter,
    Critic,
    QaGenerator,
    EvalSubject,
}

impl ModelRole {
    pub const ALL: [ModelRole; 8] = [
        ModelRole::Captioner,
        ModelRole::Analyst,
        ModelRole::Splitter,
        ModelRole::Reasoner,
        ModelRole::Rewriter,
        ModelRole::Critic,
        ModelRole::QaGenerator,
        ModelRole::EvalSubject,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelRole::Captioner => "captioner",
            ModelRole::Analyst => "analyst",
            ModelRole::Splitter => "splitter",
            ModelRole::Reasoner => "reasoner",
            ModelRole::Rewriter => "rewriter",
            ModelRole::Critic => "critic",
            ModelRole::QaGenerator => "qa_generator",
            ModelRole::EvalSubject => "eval_subject",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            ModelRole::Reasoner | ModelRole::QaGenerator => 0.7,
            _ => 0.0,
        }
    }
}

impl fmt::Display for ModelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown model role `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: ModelRole,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Serialize)]
struct KeyMaterial<'a> {
    role: ModelRole,
    messages: &'a [Message],
    temperature: f64,
    seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(role: ModelRole, messages: Vec<Message>) -> Self {
        Self {
            role,
            messages,
            temperature: role.default_temperature(),
            seed: None,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn user(role: ModelRole, prompt: impl Into<String>) -> Self {
        Self::new(role, vec![Message::user(prompt)])
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Content hash over role, messages, temperature and seed.
    pub fn cache_key(&self) -> String {
        let material = KeyMaterial {
            role: self.role,
            messages: &self.messages,
            temperature: self.temperature,
            seed: self.seed,
        };
        let bytes = serde_json::to_vec(&material).expect("request serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Total media references across all messages.
    pub fn media_ref_count(&self) -> usize {
        self.messages
            .iter()
            .map(|m| m.media_refs.as_ref().map_or(0, Vec::len))
            .sum()
    }

    pub fn first_user_content(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == crate::model::Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    /// Separate thinking trace, for backends that expose one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    pub backend_id: String,
    #[serde(default)]
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}
