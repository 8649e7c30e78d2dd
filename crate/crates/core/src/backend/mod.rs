//! Uniform chat-completion abstraction over backbones.
//!
//! A [`Backend`] performs single attempts; [`complete`] wraps an attempt loop
//! with retries and latency accounting. Pipelines never talk to backends
//! directly: they go through a [`Session`], which routes each call by stage or
//! role and records the transcript.

mod clock;
mod live;
mod route;
mod scripted;
mod session;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, ManualClock, SystemClock};
pub use live::{LiveBackend, LiveSpec};
pub use route::{RouteConfig, RouteError, RouteKey, Router, UnknownRouteKey};
pub use scripted::{
    respond, InjectedFailure, ScriptExhausted, ScriptOutcome, ScriptRule, ScriptSpec, ScriptedBackend,
};
pub use session::{CallRecord, Session};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub speaker: Speaker,
    pub text: String,
}

/// One turn against a backbone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub messages: Vec<ChatMessage>,
    /// Free-form tag carried into error messages and call records.
    pub label: Option<String>,
}

impl ChatRequest {
    /// Single composite user message.
    pub fn user(text: impl Into<String>) -> Self {
        Self::default().with_user(text)
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn with_user(mut self, text: impl Into<String>) -> Self {
        self.messages.push(ChatMessage {
            speaker: Speaker::User,
            text: text.into(),
        });
        self
    }

    pub fn with_assistant(mut self, text: impl Into<String>) -> Self {
        self.messages.push(ChatMessage {
            speaker: Speaker::Assistant,
            text: text.into(),
        });
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Everything the backbone will see, concatenated. Used for script
    /// matching and leakage checks.
    pub fn full_text(&self) -> String {
        let mut out = String::new();
        if let Some(system) = &self.system {
            out.push_str(system);
            out.push('\n');
        }
        for m in &self.messages {
            out.push_str(&m.text);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub latency_seconds: f64,
    pub attempts: u32,
    pub backend_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub retry_limit: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retry_limit: 0,
            backoff: Duration::ZERO,
        }
    }
}

/// Why a single attempt failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttemptError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}")]
    Status { status: u16 },
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("request has no messages")]
    EmptyRequest,
}

impl AttemptError {
    /// Only transport-level failures are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Timeout | Self::Transport(_) => true,
            Self::Status { status } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct BackendError {
    pub backend: String,
    pub stage: Option<String>,
    pub attempts: u32,
    pub latency_seconds: f64,
    #[source]
    pub kind: AttemptError,
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "backend `{}`", self.backend)?;
        if let Some(stage) = &self.stage {
            write!(f, " at stage {stage}")?;
        }
        write!(f, " failed after {} attempt(s): {}", self.attempts, self.kind)
    }
}

/// A backbone that can attempt one chat completion.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::default()
    }

    /// One attempt, no retries. Implementations that simulate time should
    /// sleep on `clock`.
    fn send(&self, request: &ChatRequest, clock: &dyn Clock) -> Result<String, AttemptError>;
}

/// Runs `request` against `backend`, retrying transport failures with fixed
/// backoff. Latency covers every attempt and backoff sleep.
pub fn complete(backend: &dyn Backend, request: &ChatRequest, clock: &dyn Clock) -> Result<ChatResponse, BackendError> {
    let start = clock.now();
    let policy = backend.retry_policy();
    let elapsed = |clock: &dyn Clock| (clock.now().saturating_sub(start)).as_secs_f64();
    let fail = |kind, attempts, clock: &dyn Clock| BackendError {
        backend: backend.name().to_string(),
        stage: request.label.clone(),
        attempts,
        latency_seconds: elapsed(clock),
        kind,
    };

    if request.messages.is_empty() {
        return Err(fail(AttemptError::EmptyRequest, 0, clock));
    }

    let max_attempts = policy.retry_limit.saturating_add(1);
    let mut attempts = 0;
    loop {
        attempts += 1;
        match backend.send(request, clock) {
            Ok(text) => {
                return Ok(ChatResponse {
                    text,
                    latency_seconds: elapsed(clock),
                    attempts,
                    backend_name: backend.name().to_string(),
                })
            }
            Err(err) if err.is_retryable() && attempts < max_attempts => {
                tracing::warn!(backend = backend.name(), attempt = attempts, error = %err, "retrying");
                if !policy.backoff.is_zero() {
                    clock.sleep(policy.backoff);
                }
            }
            Err(err) => return Err(fail(err, attempts, clock)),
        }
    }
}

/// Backend definition as written in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Live(LiveSpec),
    Scripted(ScriptSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("backend name must not be empty")]
    EmptyName,
    #[error("backend `{0}`: timeout_secs must be a positive number")]
    BadTimeout(String),
    #[error("backend `{0}`: latency_seconds must be a non-negative number")]
    BadLatency(String),
    #[error("backend `{name}`: {message}")]
    Client { name: String, message: String },
}

impl BackendSpec {
    pub fn is_scripted(&self) -> bool {
        matches!(self.kind, BackendKind::Scripted(_))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.name.trim().is_empty() {
            return Err(SpecError::EmptyName);
        }
        match &self.kind {
            BackendKind::Live(live) if !(live.timeout_secs.is_finite() && live.timeout_secs > 0.0) => {
                Err(SpecError::BadTimeout(self.name.clone()))
            }
            BackendKind::Scripted(s) if !(s.latency_seconds.is_finite() && s.latency_seconds >= 0.0) => {
                Err(SpecError::BadLatency(self.name.clone()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, SpecError> {
        self.validate()?;
        Ok(match &self.kind {
            BackendKind::Live(live) => Arc::new(LiveBackend::new(&self.name, live.clone()).map_err(|e| {
                SpecError::Client {
                    name: self.name.clone(),
                    message: e.to_string(),
                }
            })?),
            BackendKind::Scripted(script) => Arc::new(ScriptedBackend::from_spec(&self.name, script)),
        })
    }
}
