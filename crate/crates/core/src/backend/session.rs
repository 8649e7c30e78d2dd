use std::sync::Arc;

use crate::domain::{Role, Transcript};

use super::{complete, BackendError, ChatRequest, ChatResponse, Clock, RouteKey, Router};

/// One routed backbone call, kept for accounting and leakage audits.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub key: RouteKey,
    pub label: Option<String>,
    pub backend: String,
    pub prompt: String,
    pub latency_seconds: f64,
    pub attempts: u32,
    pub succeeded: bool,
}

/// Per-entry execution context: routes calls, keeps the transcript and the
/// prompt log, and measures entry runtime on its own clock.
pub struct Session<'r> {
    router: &'r Router,
    clock: Arc<dyn Clock>,
    started: std::time::Duration,
    transcript: Transcript,
    calls: Vec<CallRecord>,
}

impl<'r> Session<'r> {
    pub fn new(router: &'r Router, entry_id: impl Into<String>, clock: Arc<dyn Clock>) -> Self {
        let started = clock.now();
        Self {
            router,
            clock,
            started,
            transcript: Transcript::new(entry_id),
            calls: Vec::new(),
        }
    }

    pub fn router(&self) -> &Router {
        self.router
    }

    /// Routed call. The request label defaults to the route key.
    pub fn call(&mut self, key: RouteKey, request: ChatRequest) -> Result<ChatResponse, BackendError> {
        let request = labelled(key, request);
        let backend = self.router.route(key);
        let result = complete(backend.as_ref(), &request, self.clock.as_ref());
        self.log(key, &request, backend.name(), &result);
        result
    }

    /// Several independent calls on the same route. With `parallel` they run
    /// on scoped threads; results and log entries keep input order.
    pub fn call_all(
        &mut self,
        key: RouteKey,
        requests: Vec<ChatRequest>,
        parallel: bool,
    ) -> Vec<Result<ChatResponse, BackendError>> {
        if !parallel {
            return requests.into_iter().map(|r| self.call(key, r)).collect();
        }
        let requests: Vec<_> = requests.into_iter().map(|r| labelled(key, r)).collect();
        let backend = self.router.route(key);
        let clock = self.clock.as_ref();
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = requests
                .iter()
                .map(|req| {
                    let backend = backend.as_ref();
                    scope.spawn(move || complete(backend, req, clock))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("backend call panicked")).collect()
        });
        for (req, result) in requests.iter().zip(&results) {
            self.log(key, req, backend.name(), result);
        }
        results
    }

    fn log(&mut self, key: RouteKey, request: &ChatRequest, backend: &str, result: &Result<ChatResponse, BackendError>) {
        let (latency_seconds, attempts) = match result {
            Ok(r) => (r.latency_seconds, r.attempts),
            Err(e) => (e.latency_seconds, e.attempts),
        };
        self.calls.push(CallRecord {
            key,
            label: request.label.clone(),
            backend: backend.to_string(),
            prompt: request.full_text(),
            latency_seconds,
            attempts,
            succeeded: result.is_ok(),
        });
    }

    /// Records a backbone reply in the transcript.
    pub fn say(&mut self, role: Role, response: &ChatResponse) {
        self.transcript
            .push(role, response.text.clone(), response.backend_name.clone(), response.latency_seconds);
    }

    /// Records text that did not come from a backbone call.
    pub fn note(&mut self, role: Role, text: impl Into<String>) {
        self.transcript.push(role, text, "", 0.0);
    }

    pub fn stage(&mut self, label: &str) {
        self.note(Role::Stage(label.to_string()), "");
    }

    pub fn calls(&self) -> &[CallRecord] {
        &self.calls
    }

    pub fn call_count(&self) -> usize {
        self.calls.len()
    }

    pub fn calls_for(&self, key: RouteKey) -> usize {
        self.calls.iter().filter(|c| c.key == key).count()
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Seconds since the session started, on the session clock.
    pub fn elapsed_seconds(&self) -> f64 {
        self.clock.now().saturating_sub(self.started).as_secs_f64()
    }

    pub fn into_parts(self) -> (Transcript, Vec<CallRecord>) {
        (self.transcript, self.calls)
    }
}

fn labelled(key: RouteKey, mut request: ChatRequest) -> ChatRequest {
    if request.label.is_none() {
        request.label = Some(key.to_string());
    }
    request
}
