//! Deterministic stand-in backbone that replays predefined responses.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AttemptError, Backend, ChatRequest, Clock, RetryPolicy};

/// Failure a script step can inject instead of replying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectedFailure {
    Transport,
    Timeout,
}

/// One scripted step.
///
/// A rule with a `match` pattern only answers requests whose text contains the
/// pattern. Rules without a pattern are answered queue-style from the head.
/// `repeat` rules are never consumed.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default)]
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<InjectedFailure>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptRule {
    pub fn reply(text: impl Into<String>) -> Self {
        Self {
            reply: text.into(),
            ..Self::default()
        }
    }

    pub fn on(pattern: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            pattern: Some(pattern.into()),
            reply: text.into(),
            ..Self::default()
        }
    }

    pub fn failing(kind: InjectedFailure) -> Self {
        Self {
            fail: Some(kind),
            ..Self::default()
        }
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script exhausted: no rule left for this request")]
pub struct ScriptExhausted;

/// What a consumed rule produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptOutcome {
    Reply(String),
    Fail(InjectedFailure),
}

/// Core of the scripted backend: picks the rule answering `request_text`.
///
/// The first rule whose pattern occurs in the request wins. Otherwise the
/// first pattern-less rule answers. Non-repeating rules are removed.
pub fn respond(script: &mut Vec<ScriptRule>, request_text: &str) -> Result<ScriptOutcome, ScriptExhausted> {
    let index = script
        .iter()
        .position(|r| r.pattern.as_deref().is_some_and(|p| request_text.contains(p)))
        .or_else(|| script.iter().position(|r| r.pattern.is_none()))
        .ok_or(ScriptExhausted)?;
    let rule = if script[index].repeat {
        script[index].clone()
    } else {
        script.remove(index)
    };
    Ok(match rule.fail {
        Some(kind) => ScriptOutcome::Fail(kind),
        None => ScriptOutcome::Reply(rule.reply),
    })
}

/// Script configuration as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScriptSpec {
    #[serde(default)]
    pub script: Vec<ScriptRule>,
    /// Simulated latency added to the clock for every attempt.
    #[serde(default)]
    pub latency_seconds: f64,
    #[serde(default)]
    pub retry_limit: u32,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    rules: Mutex<Vec<ScriptRule>>,
    latency: Duration,
    policy: RetryPolicy,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, rules: Vec<ScriptRule>) -> Self {
        Self {
            name: name.into(),
            rules: Mutex::new(rules),
            latency: Duration::ZERO,
            policy: RetryPolicy::default(),
        }
    }

    /// Backend that answers every request with the same text.
    pub fn constant(name: impl Into<String>, reply: impl Into<String>) -> Self {
        Self::new(name, vec![ScriptRule::reply(reply).repeating()])
    }

    pub fn from_spec(name: impl Into<String>, spec: &ScriptSpec) -> Self {
        Self::new(name, spec.script.clone())
            .with_latency(Duration::from_secs_f64(spec.latency_seconds.max(0.0)))
            .with_retry_limit(spec.retry_limit)
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_retry_limit(mut self, retry_limit: u32) -> Self {
        self.policy = RetryPolicy {
            retry_limit,
            backoff: Duration::ZERO,
        };
        self
    }

    pub fn remaining(&self) -> usize {
        self.rules.lock().unwrap().len()
    }
}

impl Backend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.policy
    }

    fn send(&self, request: &ChatRequest, clock: &dyn Clock) -> Result<String, AttemptError> {
        let outcome = respond(&mut self.rules.lock().unwrap(), &request.full_text());
        if !self.latency.is_zero() {
            clock.sleep(self.latency);
        }
        match outcome {
            Ok(ScriptOutcome::Reply(text)) => Ok(text),
            Ok(ScriptOutcome::Fail(InjectedFailure::Transport)) => {
                Err(AttemptError::Transport("injected transport failure".into()))
            }
            Ok(ScriptOutcome::Fail(InjectedFailure::Timeout)) => Err(AttemptError::Timeout),
            Err(ScriptExhausted) => Err(AttemptError::ScriptExhausted),
        }
    }
}
