//! Completion clients: an HTTP endpoint and an offline stub directory.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkforge_core::promptgen::prompt_digest;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("no stub response for prompt digest {0}")]
    StubMiss(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("endpoint answered {0}")]
    BadStatus(u16),
    #[error("malformed response: {0}")]
    BadResponse(String),
}

impl LlmError {
    /// Short status word for the persistence log.
    pub fn status(&self) -> &'static str {
        match self {
            LlmError::EndpointUnreachable(_) => "unreachable",
            LlmError::StubMiss(_) => "stub_miss",
            LlmError::RateLimited(_) => "rate_limited",
            LlmError::BadStatus(_) => "bad_status",
            LlmError::BadResponse(_) => "bad_response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    /// HTTP attempts made; 1 for stubs.
    pub attempts: u32,
}

/// One row of the persistence log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmLogEntry {
    pub digest: String,
    pub trajectory_id: String,
    pub mode: String,
    pub status: String,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

pub trait Completer: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<Completion, LlmError>;
    /// `stub` or the endpoint URL, as recorded in provenance.
    fn endpoint_id(&self) -> String;
    fn mode(&self) -> &'static str;
}

/// Canned responses stored as `<digest>.txt`.
#[derive(Debug, Clone)]
pub struct StubClient {
    pub dir: PathBuf,
}

impl StubClient {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        StubClient { dir: dir.into() }
    }

    pub fn path_for(dir: &Path, digest: &str) -> PathBuf {
        dir.join(format!("{digest}.txt"))
    }
}

impl Completer for StubClient {
    fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let digest = prompt_digest(prompt);
        match std::fs::read_to_string(Self::path_for(&self.dir, &digest)) {
            Ok(text) => Ok(Completion { text, attempts: 1 }),
            Err(_) => Err(LlmError::StubMiss(digest)),
        }
    }

    fn endpoint_id(&self) -> String {
        "stub".into()
    }

    fn mode(&self) -> &'static str {
        "stub"
    }
}

#[derive(Debug, Deserialize)]
struct CompletionBody {
    text: String,
}

/// POSTs `{model, prompt, temperature}` and reads `{text}`. HTTP 429 is
/// retried with exponential backoff.
pub struct HttpClient {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, temperature: f64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpClient {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature,
            max_attempts: 5,
            initial_backoff: Duration::from_millis(500),
            agent,
        }
    }

    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.initial_backoff = initial;
        self
    }
}

impl Completer for HttpClient {
    fn complete(&self, prompt: &str) -> Result<Completion, LlmError> {
        let body = CompletionRequest {
            model: &self.model,
            prompt,
            temperature: self.temperature,
        };
        let mut wait = self.initial_backoff;
        for attempt in 1..=self.max_attempts {
            match self.agent.post(&self.endpoint).send_json(&body) {
                Ok(mut resp) => {
                    let parsed: CompletionBody = resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| LlmError::BadResponse(e.to_string()))?;
                    return Ok(Completion {
                        text: parsed.text,
                        attempts: attempt,
                    });
                }
                Err(ureq::Error::StatusCode(429)) => {
                    tracing::warn!(attempt, endpoint = %self.endpoint, "rate limited");
                    if attempt < self.max_attempts {
                        std::thread::sleep(wait);
                        wait *= 2;
                    }
                }
                Err(ureq::Error::StatusCode(code)) => return Err(LlmError::BadStatus(code)),
                Err(e) => return Err(LlmError::EndpointUnreachable(e.to_string())),
            }
        }
        Err(LlmError::RateLimited(self.max_attempts))
    }

    fn endpoint_id(&self) -> String {
        self.endpoint.clone()
    }

    fn mode(&self) -> &'static str {
        "live"
    }
}
