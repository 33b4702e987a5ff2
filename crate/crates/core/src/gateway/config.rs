use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::Section;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("invalid backend config: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provider {
    /// OpenAI-style `chat/completions`.
    Openai,
    /// Anthropic `messages`.
    Anthropic,
    /// Google `generateContent`.
    Gemini,
}

/// (model id, provider, endpoint, api key variable)
pub const PRESETS: &[(&str, Provider, &str, &str)] = &[
    (
        "claude-3-opus-20240229",
        Provider::Anthropic,
        "https://api.anthropic.com/v1/messages",
        "ANTHROPIC_API_KEY",
    ),
    (
        "gemini-1.5-pro-latest",
        Provider::Gemini,
        "https://generativelanguage.googleapis.com/v1beta",
        "GEMINI_API_KEY",
    ),
    (
        "gpt-4-vision-preview",
        Provider::Openai,
        "https://api.openai.com/v1/chat/completions",
        "OPENAI_API_KEY",
    ),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// First backoff delay in milliseconds; doubles per retry.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            backoff_base_ms: 1000,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << retry.min(16)))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HttpApiFields {
    preset: Option<String>,
    provider: Option<Provider>,
    endpoint: Option<String>,
    model_id: Option<String>,
    auth_env: Option<String>,
    #[serde(default = "default_rate_limit")]
    rate_limit: u32,
    #[serde(default)]
    retries: RetryPolicy,
    #[serde(default = "default_timeout")]
    timeout_secs: u64,
}

fn default_rate_limit() -> u32 {
    60
}

fn default_timeout() -> u64 {
    120
}

/// A remote chat-completion endpoint. The API key is never stored here,
/// only the name of the environment variable holding it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HttpApiFields")]
pub struct HttpApiConfig {
    pub provider: Provider,
    pub endpoint: String,
    pub model_id: String,
    pub auth_env: String,
    /// Requests per minute.
    pub rate_limit: u32,
    pub retries: RetryPolicy,
    pub timeout_secs: u64,
}

impl HttpApiConfig {
    pub fn preset(model_id: &str) -> Result<Self, ConfigError> {
        let (id, provider, endpoint, env) = PRESETS
            .iter()
            .find(|p| p.0 == model_id)
            .ok_or_else(|| ConfigError::UnknownPreset(model_id.to_string()))?;
        Ok(HttpApiConfig {
            provider: *provider,
            endpoint: endpoint.to_string(),
            model_id: id.to_string(),
            auth_env: env.to_string(),
            rate_limit: default_rate_limit(),
            retries: RetryPolicy::default(),
            timeout_secs: default_timeout(),
        })
    }
}

impl TryFrom<HttpApiFields> for HttpApiConfig {
    type Error = ConfigError;

    fn try_from(f: HttpApiFields) -> Result<Self, Self::Error> {
        let base = match &f.preset {
            Some(p) => Some(HttpApiConfig::preset(p)?),
            None => None,
        };
        let missing = |what: &str| ConfigError::Invalid(format!("http_api requires {what}"));
        Ok(HttpApiConfig {
            provider: f
                .provider
                .or(base.as_ref().map(|b| b.provider))
                .ok_or_else(|| missing("provider"))?,
            endpoint: f
                .endpoint
                .or(base.as_ref().map(|b| b.endpoint.clone()))
                .ok_or_else(|| missing("endpoint"))?,
            model_id: f
                .model_id
                .or(base.as_ref().map(|b| b.model_id.clone()))
                .ok_or_else(|| missing("model_id"))?,
            auth_env: f
                .auth_env
                .or(base.as_ref().map(|b| b.auth_env.clone()))
                .ok_or_else(|| missing("auth_env"))?,
            rate_limit: f.rate_limit,
            retries: f.retries,
            timeout_secs: f.timeout_secs,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    #[default]
    Full,
    StatesOnly,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub mode: OracleMode,
}

/// Seeded corruption of the oracle response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoisyConfig {
    /// Per-section corruption probability.
    pub corruption_prob: f64,
    pub seed: u64,
    /// Sections eligible for corruption.
    #[serde(default = "all_sections")]
    pub sections: Vec<Section>,
    /// Share of corruptions emitted as a malformed line instead.
    #[serde(default = "default_malformed")]
    pub malformed_prob: f64,
}

fn all_sections() -> Vec<Section> {
    Section::ALL.to_vec()
}

fn default_malformed() -> f64 {
    0.1
}

impl NoisyConfig {
    pub fn new(corruption_prob: f64, seed: u64) -> Self {
        NoisyConfig {
            corruption_prob,
            seed,
            sections: all_sections(),
            malformed_prob: default_malformed(),
        }
    }

    pub fn sections(mut self, sections: &[Section]) -> Self {
        self.sections = sections.to_vec();
        self
    }

    pub fn malformed_prob(mut self, p: f64) -> Self {
        self.malformed_prob = p;
        self
    }
}

/// Canned replies. Exactly one of `reply`, `replies` or `echo` drives it;
/// `reply` also serves as the fallback for ids missing from `replies`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedConfig {
    pub reply: Option<String>,
    /// Reply per sample id.
    pub replies: BTreeMap<String, String>,
    /// Plan with the engine from the ground-truth states embedded in the prompt.
    pub echo: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    HttpApi(HttpApiConfig),
    Oracle(OracleConfig),
    Noisy(NoisyConfig),
    Scripted(ScriptedConfig),
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        match self {
            BackendConfig::HttpApi(c) => {
                if c.endpoint.trim().is_empty() || c.model_id.trim().is_empty() {
                    return bad("http_api requires endpoint and model_id");
                }
                if c.auth_env.trim().is_empty() {
                    return bad("http_api requires auth_env");
                }
                if c.rate_limit == 0 {
                    return bad("rate_limit must be positive");
                }
                if c.retries.max_attempts == 0 {
                    return bad("retries.max_attempts must be positive");
                }
            }
            BackendConfig::Noisy(c) => {
                if !(0.0..=1.0).contains(&c.corruption_prob) {
                    return bad("corruption_prob must lie in [0, 1]");
                }
                if !(0.0..=1.0).contains(&c.malformed_prob) {
                    return bad("malformed_prob must lie in [0, 1]");
                }
            }
            BackendConfig::Scripted(c) => {
                if !c.echo && c.reply.is_none() && c.replies.is_empty() {
                    return bad("scripted backend needs reply, replies or echo");
                }
                if c.echo && (c.reply.is_some() || !c.replies.is_empty()) {
                    return bad("echo cannot be combined with canned replies");
                }
            }
            BackendConfig::Oracle(_) => {}
        }
        Ok(())
    }

    /// Parses a short local-backend spec:
    /// `oracle | oracle-states | noisy:<p>[:<seed>] | echo`.
    pub fn from_spec(spec: &str) -> Result<Self, ConfigError> {
        let mut parts = spec.split(':');
        let unknown = || ConfigError::Invalid(format!("unknown backend {spec:?}"));
        let config = match parts.next() {
            Some("oracle") => BackendConfig::Oracle(OracleConfig::default()),
            Some("oracle-states") => BackendConfig::Oracle(OracleConfig {
                mode: OracleMode::StatesOnly,
            }),
            Some("echo") => BackendConfig::Scripted(ScriptedConfig {
                echo: true,
                ..ScriptedConfig::default()
            }),
            Some("noisy") => {
                let p = parts.next().and_then(|p| p.parse().ok()).ok_or_else(unknown)?;
                let seed = match parts.next() {
                    Some(s) => s.parse().map_err(|_| unknown())?,
                    None => 0,
                };
                BackendConfig::Noisy(NoisyConfig::new(p, seed))
            }
            _ => return Err(unknown()),
        };
        if parts.next().is_some() {
            return Err(unknown());
        }
        config.validate()?;
        Ok(config)
    }

    /// Whether calls cost money.
    pub fn is_remote(&self) -> bool {
        matches!(self, BackendConfig::HttpApi(_))
    }

    pub fn label(&self) -> String {
        match self {
            BackendConfig::HttpApi(c) => c.model_id.clone(),
            BackendConfig::Oracle(_) => "oracle".into(),
            BackendConfig::Noisy(c) => format!("noisy(p={})", c.corruption_prob),
            BackendConfig::Scripted(_) => "scripted".into(),
        }
    }
}
