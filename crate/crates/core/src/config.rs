//! TOML configuration: per-role backend routing plus pipeline knobs.
//!
//! ```toml
//! [gateway]
//! max_in_flight = 8
//! cache_dir = "cache"
//!
//! [gateway.retry]
//! attempts = 3
//! base_delay_ms = 1000
//!
//! [roles.reasoner]
//! backend = "http"
//! endpoint = "https://api.example.com/v1"
//! model = "reasoner-large"
//! temperature = 0.7
//! api_key_env = "REASONER_API_KEY"
//!
//! [roles.critic]
//! backend = "mock"
//! ```
//!
//! Relative paths resolve against the config file's directory. Secrets are
//! only ever read from the environment variable named by `api_key_env`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::gateway::{Backend, Gateway, HttpBackend, MockBackend, ModelRole, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing config {path}: {source}")]
    Parse { path: String, source: toml::de::Error },
    #[error("role `{role}`: {problem}")]
    Role { role: String, problem: String },
    #[error("loading mock fixtures {path}: {source}")]
    Fixtures { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewaySection,
    pub mock: MockSection,
    pub roles: BTreeMap<String, RoleSection>,
    pub pipeline: PipelineSection,
    /// Directory relative paths resolve against; set by [`Config::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub max_in_flight: usize,
    pub cache_dir: Option<PathBuf>,
    pub retry: RetrySection,
}

impl Default for GatewaySection {
    fn default() -> Self {
        Self {
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            cache_dir: None,
            retry: RetrySection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrySection {
    pub attempts: u32,
    pub base_delay_ms: u64,
    pub jitter: bool,
}

impl Default for RetrySection {
    fn default() -> Self {
        let p = RetryPolicy::default();
        Self {
            attempts: p.attempts,
            base_delay_ms: p.base_delay.as_millis() as u64,
            jitter: p.jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockSection {
    pub fixtures: Option<PathBuf>,
    pub simulate: bool,
    pub latency_ms: u64,
}

impl Default for MockSection {
    fn default() -> Self {
        Self {
            fixtures: None,
            simulate: true,
            latency_ms: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleSection {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub api_key_env: Option<String>,
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub containment_threshold: f64,
    pub frames: usize,
    pub clip_tool: String,
    pub cut_clips: bool,
    pub manifest_only: bool,
    pub execution: Execution,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            containment_threshold: crate::pipeline::DEFAULT_CONTAINMENT_THRESHOLD,
            frames: crate::model::DEFAULT_FRAME_COUNT,
            clip_tool: "ffmpeg".into(),
            cut_clips: false,
            manifest_only: true,
            execution: Execution::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The shared offline backend described by `[mock]`.
    pub fn mock_backend(&self) -> Result<MockBackend, ConfigError> {
        let mut mock = MockBackend::new()
            .with_simulation(self.mock.simulate)
            .with_latency(Duration::from_millis(self.mock.latency_ms));
        if let Some(fx) = &self.mock.fixtures {
            let path = self.resolve(fx);
            mock = mock.with_fixture_file(&path).map_err(|source| ConfigError::Fixtures {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(mock)
    }

    /// Builds the gateway. With `force_mock` every role is routed to the
    /// mock backend and no HTTP backend is constructed.
    pub fn build_gateway(&self, force_mock: bool) -> Result<Gateway, ConfigError> {
        let mut role_sections = BTreeMap::new();
        for (name, section) in &self.roles {
            let role: ModelRole = name.parse().map_err(|problem| ConfigError::Role {
                role: name.clone(),
                problem,
            })?;
            role_sections.insert(role, section);
        }

        let retry = &self.gateway.retry;
        let mut gw = Gateway::new()
            .with_max_in_flight(self.gateway.max_in_flight)
            .with_retry(RetryPolicy {
                attempts: retry.attempts.max(1),
                base_delay: Duration::from_millis(retry.base_delay_ms),
                jitter: retry.jitter,
            });
        if let Some(dir) = &self.gateway.cache_dir {
            gw = gw.with_cache_dir(self.resolve(dir));
        }

        let mock: Arc<MockBackend> = Arc::new(self.mock_backend()?);
        let roles: Vec<ModelRole> = if force_mock {
            ModelRole::ALL.to_vec()
        } else {
            role_sections.keys().copied().collect()
        };
        for role in roles {
            let section = role_sections.get(&role).copied().cloned().unwrap_or_default();
            let backend: Arc<dyn Backend> = match (force_mock, section.backend) {
                (true, _) | (false, BackendKind::Mock) => mock.clone(),
                (false, BackendKind::Http) => Arc::new(http_backend(role, &section)?),
            };
            let model = section.model.clone().unwrap_or_else(|| "mock".into());
            gw = gw.with_route(role, backend, model);
            if let Some(t) = section.temperature {
                if t < 0.0 {
                    return Err(ConfigError::Role {
                        role: role.to_string(),
                        problem: format!("temperature {t} is negative"),
                    });
                }
                gw = gw.with_temperature(role, t);
            }
        }
        Ok(gw)
    }
}

fn http_backend(role: ModelRole, section: &RoleSection) -> Result<HttpBackend, ConfigError> {
    let problem = |p: String| ConfigError::Role {
        role: role.to_string(),
        problem: p,
    };
    let endpoint = section
        .endpoint
        .clone()
        .ok_or_else(|| problem("http backend needs `endpoint`".into()))?;
    if section.model.is_none() {
        return Err(problem("http backend needs `model`".into()));
    }
    let api_key = match &section.api_key_env {
        Some(var) => Some(std::env::var(var).map_err(|_| problem(format!("environment variable `{var}` is not set")))?),
        None => None,
    };
    let timeout = Duration::from_secs(section.timeout_s.unwrap_or(120));
    Ok(HttpBackend::new(endpoint, api_key, timeout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ChatRequest, GatewayError};

    #[test]
    fn empty_config_has_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg.gateway.max_in_flight, 8);
        assert_eq!(cfg.gateway.retry.attempts, 3);
        assert_eq!(cfg.pipeline.containment_threshold, 0.7);
        assert_eq!(cfg.pipeline.frames, 32);
    }

    #[test]
    fn example_config_parses() {
        let cfg = Config::parse(include_str!("../../../nepkit.example.toml")).unwrap();
        assert_eq!(cfg.roles.len(), 8);
        assert!(cfg.roles.keys().all(|r| ModelRole::ALL.iter().any(|m| m.as_str() == r)));
        assert_eq!(cfg.pipeline, PipelineSection::default());
    }

    #[test]
    fn unmapped_role_without_mock() {
        let cfg = Config::parse("[roles.critic]\nbackend = \"mock\"\n").unwrap();
        let gw = cfg.build_gateway(false).unwrap();
        let err = gw.complete(&ChatRequest::user(ModelRole::Analyst, "x")).unwrap_err();
        assert_eq!(err, GatewayError::UnmappedRole(ModelRole::Analyst));
    }

    #[test]
    fn force_mock_replaces_http_routes() {
        let cfg = Config::parse(
            "[roles.reasoner]\nbackend = \"http\"\nendpoint = \"http://127.0.0.1:9\"\nmodel = \"r\"\ntemperature = 0.3\n",
        )
        .unwrap();
        assert!(cfg.build_gateway(false).unwrap().is_networked());
        let gw = cfg.build_gateway(true).unwrap();
        assert!(!gw.is_networked());
        assert_eq!(gw.temperature_for(ModelRole::Reasoner), 0.3);
        assert_eq!(gw.temperature_for(ModelRole::Critic), 0.0);
    }

    #[test]
    fn http_role_requires_endpoint() {
        let cfg = Config::parse("[roles.critic]\nbackend = \"http\"\nmodel = \"m\"\n").unwrap();
        assert!(matches!(cfg.build_gateway(false), Err(ConfigError::Role { .. })));
    }

    #[test]
    fn unknown_role_or_key_rejected() {
        let cfg = Config::parse("[roles.judge]\nbackend = \"mock\"\n").unwrap();
        assert!(cfg.build_gateway(false).is_err());
        assert!(Config::parse("[gateway]\nmax_inflight = 3\n").is_err());
    }
}
