//! Chat-completion client.
//!
//! Wire contract: `POST` a JSON body `{model, messages: [{role, content}],
//! temperature}`; the reply is read from `choices[0].message.content`.
//! 429 and 5xx responses and timeouts are retried with exponential backoff.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CorrectorBackend, PromptMessage};
use crate::attack::AttackTranscript;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub initial_backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    /// Optional JSON-lines log of every request and response.
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_concurrency() -> usize {
    4
}
fn default_retries() -> u32 {
    4
}
fn default_backoff() -> u64 {
    500
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: None,
            timeout_secs: default_timeout(),
            max_concurrent: default_concurrency(),
            max_retries: default_retries(),
            initial_backoff_ms: default_backoff(),
            temperature: 0.0,
            audit_log: None,
        }
    }

    /// Every problem with the config, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            p.push(format!("backend.endpoint {:?} is not an http(s) URL", self.endpoint));
        }
        if self.model.trim().is_empty() {
            p.push("backend.model is empty".into());
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            p.push("backend.timeout_secs must be positive".into());
        }
        if self.max_concurrent == 0 {
            p.push("backend.max_concurrent must be at least 1".into());
        }
        if !(self.temperature >= 0.0) {
            p.push("backend.temperature must be non-negative".into());
        }
        p
    }
}

pub struct RemoteCorrector {
    config: RemoteConfig,
    agent: ureq::Agent,
    token: Option<String>,
    audit: Option<Mutex<std::fs::File>>,
}

enum Attempt {
    Done(String),
    Retry(Error),
    Fail(Error),
}

impl RemoteCorrector {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(vec![format!("environment variable {var} is not set")])
            })?),
            None => None,
        };
        let audit = match &config.audit_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new().create(true).append(true).open(path)?,
            )),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            config,
            agent,
            token,
            audit,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_body(&self, messages: &[PromptMessage]) -> Value {
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": self.config.temperature,
        })
    }

    fn attempt(&self, body: &[u8]) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(ureq::Error::Timeout(t)) => {
                return Attempt::Retry(Error::BackendTimeout(t.to_string()))
            }
            Err(ureq::Error::Io(e)) if e.kind() == ErrorKind::TimedOut => {
                return Attempt::Retry(Error::BackendTimeout(e.to_string()))
            }
            Err(e) => return Attempt::Fail(Error::BackendProtocol(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 {
            return Attempt::Retry(Error::RateLimited { attempts: 0 });
        }
        if status >= 500 {
            return Attempt::Retry(Error::BackendProtocol(format!("server error {status}")));
        }
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(t)) => {
                return Attempt::Retry(Error::BackendTimeout(t.to_string()))
            }
            Err(e) => return Attempt::Fail(Error::BackendProtocol(e.to_string())),
        };
        if !(200..300).contains(&status) {
            return Attempt::Fail(Error::BackendProtocol(format!("status {status}: {text}")));
        }
        match parse_reply(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fail(e),
        }
    }

    fn log(&self, request: &Value, outcome: &std::result::Result<String, String>) {
        if let Some(file) = &self.audit {
            let record = match outcome {
                Ok(content) => json!({"request": request, "response": content}),
                Err(e) => json!({"request": request, "error": e}),
            };
            if let Ok(mut f) = file.lock() {
                let _ = writeln!(f, "{record}");
            }
        }
    }
}

/// Extracts `choices[0].message.content`.
pub(crate) fn parse_reply(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| Error::BackendProtocol(format!("response is not JSON: {e}")))?;
    v.get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::BackendProtocol("missing choices[0].message.content".into()))
}

impl CorrectorBackend for RemoteCorrector {
    fn name(&self) -> &str {
        &self.config.model
    }

    fn correct(&self, messages: &[PromptMessage], _: &AttackTranscript) -> Result<String> {
        if messages.is_empty() {
            return Err(invalid("no prompt messages"));
        }
        let request = self.request_body(messages);
        let body = serde_json::to_vec(&request)?;
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let attempts = self.config.max_retries + 1;
        for attempt in 1..=attempts {
            let last = attempt == attempts;
            match self.attempt(&body) {
                Attempt::Done(content) => {
                    self.log(&request, &Ok(content.clone()));
                    return Ok(content);
                }
                Attempt::Fail(e) => {
                    self.log(&request, &Err(e.to_string()));
                    return Err(e);
                }
                Attempt::Retry(e) if last => {
                    let e = match e {
                        Error::RateLimited { .. } => Error::RateLimited { attempts },
                        other => other,
                    };
                    self.log(&request, &Err(e.to_string()));
                    return Err(e);
                }
                Attempt::Retry(_) => {
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
        unreachable!("the final attempt always returns")
    }

    fn max_concurrent(&self) -> usize {
        self.config.max_concurrent
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reply_parsing() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"the cat"}}]}"#;
        assert_eq!(parse_reply(ok).unwrap(), "the cat");
        assert!(matches!(parse_reply("{}"), Err(Error::BackendProtocol(_))));
        assert!(matches!(parse_reply("nope"), Err(Error::BackendProtocol(_))));
    }

    #[test]
    fn config_lists_every_problem() {
        let mut c = RemoteConfig::new("ftp://x", " ");
        c.max_concurrent = 0;
        assert_eq!(c.problems().len(), 3);
        assert!(RemoteConfig::new("http://localhost:1/v1", "m").problems().is_empty());
    }
}
