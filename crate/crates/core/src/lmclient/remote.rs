use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, LmClient, LmError, Usage};

pub const BASE_URL_ENV: &str = "REFKIT_LM_BASE_URL";
pub const API_KEY_ENV: &str = "REFKIT_LM_API_KEY";

/// Chat-completions style endpoint. The credential is read from the environment only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_path() -> String {
    "/v1/chat/completions".into()
}
fn default_key_env() -> String {
    API_KEY_ENV.into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            base_url: base_url.into(),
            path: default_path(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
        }
    }

    /// Base URL from `REFKIT_LM_BASE_URL`.
    pub fn from_env() -> Result<RemoteConfig, LmError> {
        std::env::var(BASE_URL_ENV)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(RemoteConfig::new)
            .ok_or_else(|| LmError::Config(format!("{BASE_URL_ENV} is not set")))
    }

    pub fn url(&self) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), self.path.trim_start_matches('/'))
    }
}

pub struct RemoteClient {
    config: RemoteConfig,
    agent: ureq::Agent,
    lock: Mutex<()>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

enum Attempt {
    Done(Result<ChatResponse, LmError>),
    Retry(LmError),
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> RemoteClient {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient { config, agent, lock: Mutex::new(()) }
    }

    fn attempt(&self, body: &str, key: &str) -> Attempt {
        let sent = self
            .agent
            .post(&self.config.url())
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LmError::Timeout { attempts: 0 }),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                return Attempt::Retry(LmError::Timeout { attempts: 0 })
            }
            Err(e) => return Attempt::Retry(LmError::Io(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(LmError::Timeout { attempts: 0 }),
            Err(e) => return Attempt::Retry(LmError::Io(e.to_string())),
        };
        match status {
            200..=299 => Attempt::Done(parse_body(&text)),
            401 | 403 => Attempt::Done(Err(LmError::AuthFailure { status })),
            429 => Attempt::Retry(LmError::RateLimited { attempts: 0 }),
            500..=599 => Attempt::Retry(LmError::Http { status, body: text }),
            _ => Attempt::Done(Err(LmError::Http { status, body: text })),
        }
    }
}

fn parse_body(text: &str) -> Result<ChatResponse, LmError> {
    let wire: WireResponse = serde_json::from_str(text).map_err(|e| LmError::Protocol(e.to_string()))?;
    let choice = wire.choices.into_iter().next().ok_or_else(|| LmError::Protocol("no choices".into()))?;
    let usage = wire.usage.unwrap_or_default();
    Ok(ChatResponse {
        text: choice.message.content.unwrap_or_default(),
        usage: Usage { prompt_tokens: usage.prompt_tokens, completion_tokens: usage.completion_tokens },
        backend: "remote".into(),
    })
}

impl LmClient for RemoteClient {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LmError> {
        let key = std::env::var(&self.config.api_key_env)
            .map_err(|_| LmError::Config(format!("{} is not set", self.config.api_key_env)))?;
        let body = serde_json::json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
        .to_string();
        let _serial = self.lock.lock().unwrap();
        let attempts = self.config.max_retries + 1;
        let mut last = LmError::Io("no attempt made".into());
        for n in 0..attempts {
            if n > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << (n - 1).min(16))));
            }
            match self.attempt(&body, &key) {
                Attempt::Done(result) => return result,
                Attempt::Retry(e) => last = e,
            }
        }
        Err(match last {
            LmError::Timeout { .. } => LmError::Timeout { attempts },
            LmError::RateLimited { .. } => LmError::RateLimited { attempts },
            other => other,
        })
    }
}
