//! Live chat-completion backend.
//!
//! One POST per query: `{"model": ..., "temperature": 0, "messages":
//! [{"role": "user", "content": prompt}]}`; the answer is the first
//! choice's message content. Temperature is pinned to 0 — the pipeline
//! wants factual, repeatable answers. Transient failures (timeouts, I/O,
//! 429, 5xx) retry with deterministic exponential backoff; auth and
//! protocol errors fail immediately. A semaphore caps in-flight requests
//! and an optional minimum interval throttles request starts.

use std::env;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{parse_response, ChoiceQuery, QueryContext, Selection, Selector, SelectorError};

#[derive(Debug, Clone)]
pub struct HttpSelectorConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer credential.
    pub credential_env: String,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry. No jitter, so retry
    /// schedules are reproducible.
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
    /// Minimum spacing between request starts; 0 disables the ceiling.
    pub min_request_interval_ms: u64,
    pub template_version: String,
}

impl Default for HttpSelectorConfig {
    fn default() -> Self {
        HttpSelectorConfig {
            endpoint: "http://localhost:8080/v1/chat/completions".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            credential_env: "KGED_API_KEY".to_string(),
            max_retries: 3,
            backoff_base_ms: 250,
            timeout_ms: 30_000,
            max_in_flight: 4,
            min_request_interval_ms: 0,
            template_version: super::TEMPLATE_V1.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Envelope {
    choices: Vec<EnvelopeChoice>,
}

#[derive(Debug, Deserialize)]
struct EnvelopeChoice {
    message: EnvelopeMessage,
}

#[derive(Debug, Deserialize)]
struct EnvelopeMessage {
    content: String,
}

pub struct HttpSelector {
    config: HttpSelectorConfig,
    credential: String,
    agent: ureq::Agent,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    last_start: Mutex<Option<Instant>>,
}

impl HttpSelector {
    /// Reads the credential from the configured environment variable and
    /// prepares the HTTP agent. Fails fast when the credential is absent.
    pub fn new(config: HttpSelectorConfig) -> Result<Self, SelectorError> {
        let credential = env::var(&config.credential_env)
            .map_err(|_| SelectorError::CredentialMissing(config.credential_env.clone()))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpSelector {
            config,
            credential,
            agent,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            last_start: Mutex::new(None),
        })
    }

    fn acquire_slot(&self) {
        let mut count = self.in_flight.lock().expect("in-flight lock");
        while *count >= self.config.max_in_flight.max(1) {
            count = self.slot_freed.wait(count).expect("in-flight lock");
        }
        *count += 1;
    }

    fn release_slot(&self) {
        let mut count = self.in_flight.lock().expect("in-flight lock");
        *count -= 1;
        drop(count);
        self.slot_freed.notify_one();
    }

    fn respect_rate_ceiling(&self) {
        if self.config.min_request_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_request_interval_ms);
        let mut last = self.last_start.lock().expect("rate lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                std::thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    /// One request attempt. `Ok` is the raw message content; `Err(true)`
    /// is retryable, `Err(false)` carries a fatal error.
    fn attempt(&self, prompt: &str) -> Result<String, (bool, SelectorError)> {
        self.respect_rate_ceiling();
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let result = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.credential))
            .send_json(&body);
        let mut response = match result {
            Ok(r) => r,
            Err(e) => {
                let retryable = matches!(
                    e,
                    ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed
                );
                return Err((retryable, SelectorError::Endpoint(e.to_string())));
            }
        };
        let status = response.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err((false, SelectorError::CredentialRejected(status))),
            429 | 500..=599 => {
                return Err((
                    true,
                    SelectorError::Endpoint(format!("HTTP {status} from endpoint")),
                ));
            }
            other => {
                return Err((
                    false,
                    SelectorError::Endpoint(format!("HTTP {other} from endpoint")),
                ));
            }
        }
        let envelope: Envelope = response
            .body_mut()
            .read_json()
            .map_err(|e| (false, SelectorError::MalformedEnvelope(e.to_string())))?;
        let content = envelope
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| {
                (
                    false,
                    SelectorError::MalformedEnvelope("no choices in response".to_string()),
                )
            })?;
        Ok(content)
    }
}

impl Selector for HttpSelector {
    fn select(
        &self,
        _ctx: &QueryContext<'_>,
        query: &ChoiceQuery,
    ) -> Result<Selection, SelectorError> {
        let prompt = super::render_prompt(&self.config.template_version, query)?;
        self.acquire_slot();
        let outcome = (|| {
            let mut attempt_no = 0u32;
            loop {
                match self.attempt(&prompt) {
                    Ok(content) => {
                        let mut selection = parse_response(&content, query);
                        selection.retries = attempt_no;
                        return Ok(selection);
                    }
                    Err((retryable, error)) => {
                        if !retryable {
                            return Err(error);
                        }
                        if attempt_no >= self.config.max_retries {
                            return Err(SelectorError::RetriesExhausted {
                                attempts: attempt_no + 1,
                                last_error: error.to_string(),
                            });
                        }
                        let delay = self.config.backoff_base_ms << attempt_no;
                        std::thread::sleep(Duration::from_millis(delay));
                        attempt_no += 1;
                    }
                }
            }
        })();
        self.release_slot();
        outcome
    }
}
