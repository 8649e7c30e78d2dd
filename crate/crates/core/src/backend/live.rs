//! HTTP backend speaking the common chat-completions wire shape.
//!
//! Request body: `{"model": ..., "messages": [{"role": ..., "content": ...}], "temperature"?}`.
//! The reply text is read from `choices[0].message.content`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{AttemptError, Backend, ChatRequest, Clock, RetryPolicy, Speaker};

fn default_timeout() -> f64 {
    120.0
}

fn default_retry_limit() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSpec {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in configs, transcripts or reports.
    pub credential_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

pub struct LiveBackend {
    name: String,
    spec: LiveSpec,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend")
            .field("name", &self.name)
            .field("endpoint", &self.spec.endpoint)
            .field("model", &self.spec.model)
            .finish()
    }
}

impl LiveBackend {
    pub fn new(name: impl Into<String>, spec: LiveSpec) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(spec.timeout_secs))
            .build()?;
        Ok(Self {
            name: name.into(),
            spec,
            client,
        })
    }

    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        for m in &request.messages {
            let role = match m.speaker {
                Speaker::User => "user",
                Speaker::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.text}));
        }
        let mut body = json!({"model": self.spec.model, "messages": messages});
        if let Some(t) = self.spec.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

fn reply_text(body: &str) -> Result<String, AttemptError> {
    let value: Value = serde_json::from_str(body).map_err(|e| AttemptError::Malformed(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| AttemptError::Malformed("missing choices[0].message.content".into()))
}

impl Backend for LiveBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retry_limit: self.spec.retry_limit,
            backoff: Duration::from_millis(self.spec.backoff_ms),
        }
    }

    fn send(&self, request: &ChatRequest, _clock: &dyn Clock) -> Result<String, AttemptError> {
        let key = std::env::var(&self.spec.credential_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| AttemptError::MissingCredential(self.spec.credential_env.clone()))?;
        let response = self
            .client
            .post(&self.spec.endpoint)
            .bearer_auth(key)
            .json(&self.request_body(request))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    AttemptError::Timeout
                } else {
                    AttemptError::Transport(e.without_url().to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            return Err(AttemptError::Status {
                status: status.as_u16(),
            });
        }
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Transport(e.without_url().to_string())
            }
        })?;
        reply_text(&body)
    }
}
