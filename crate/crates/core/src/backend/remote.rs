//! HTTP client for an external scoring service.
//!
//! Wire contract (JSON bodies):
//!
//! | endpoint            | request                                                            | response           |
//! |---------------------|--------------------------------------------------------------------|--------------------|
//! | `POST /score/frame`    | `{frame_feature, entity: {id, name, type}, prompt}`              | `{score}`          |
//! | `POST /score/relation` | `{frame_feature, context, subject, relation, candidate, prompt}` | `{score}`          |
//! | `POST /score/qa`       | `{frame_feature, context, question, options}`                    | `{scores: [..]}`   |
//! | `GET /health`          |                                                                  | `{status, model_ids}` |
//!
//! `subject` and `candidate` use the same `{id, name, type}` shape as `entity`.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{strict_score, EntityRef, FrameRequest, QaRequest, RelationRequest, ScorerBackend};
use crate::error::BackendError;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://127.0.0.1:8700`.
    pub endpoint: String,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub retry_backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            retry_backoff: Duration::from_millis(200),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub model_ids: Vec<String>,
}

#[derive(Serialize)]
struct FrameBody<'a> {
    frame_feature: &'a [f64],
    entity: &'a EntityRef<'a>,
    prompt: &'a str,
}

#[derive(Serialize)]
struct RelationBody<'a> {
    frame_feature: &'a [f64],
    context: &'a str,
    subject: &'a EntityRef<'a>,
    relation: &'a str,
    candidate: &'a EntityRef<'a>,
    prompt: &'a str,
}

#[derive(Serialize)]
struct QaBody<'a> {
    frame_feature: &'a [f64],
    context: &'a str,
    question: &'a str,
    options: &'a [String],
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

#[derive(Deserialize)]
struct ScoresReply {
    scores: Vec<f64>,
}

/// Counting semaphore bounding concurrent requests.
struct Limiter {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cond.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cond.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

/// Scorer backend that forwards every request to an HTTP scoring service.
/// Transport failures, timeouts, 5xx and 429 are retried up to
/// `max_attempts`; any other non-success status fails immediately.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    limiter: Limiter,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = Limiter::new(config.max_in_flight);
        Self {
            config,
            agent,
            limiter,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    pub fn health(&self) -> Result<HealthStatus, BackendError> {
        self.with_retries("/health", |url| self.agent.get(url).call())
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, BackendError> {
        self.with_retries(path, |url| self.agent.post(url).send_json(body))
    }

    fn with_retries<T, F>(&self, path: &str, send: F) -> Result<T, BackendError>
    where
        T: DeserializeOwned,
        F: Fn(&str) -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let url = self.url(path);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.attempt(&url, &send)
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    warn!(%url, attempt, attempts, error = %msg, "scoring request failed");
                    last = msg;
                    if attempt < attempts {
                        thread::sleep(self.config.retry_backoff * attempt);
                    }
                }
            }
        }
        Err(BackendError::Unavailable(format!(
            "{url}: giving up after {attempts} attempts: {last}"
        )))
    }

    fn attempt<T, F>(&self, url: &str, send: &F) -> Result<T, Attempt>
    where
        T: DeserializeOwned,
        F: Fn(&str) -> Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    {
        let mut resp = send(url).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading response body: {e}")))?;
        debug!(url, status, "scoring response");
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("status {status}: {body}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Unavailable(format!(
                "{url}: status {status}: {body}"
            ))));
        }
        serde_json::from_str(&body).map_err(|e| {
            Attempt::Fatal(BackendError::Protocol(format!(
                "{url}: unparseable response {body:?}: {e}"
            )))
        })
    }
}

impl ScorerBackend for RemoteBackend {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn frame_relevance(&self, req: &FrameRequest<'_>) -> Result<f64, BackendError> {
        let body = FrameBody {
            frame_feature: req.feature.as_slice(),
            entity: &req.entity,
            prompt: req.prompt,
        };
        let reply: ScoreReply = self.post("/score/frame", &body)?;
        strict_score(reply.score)
    }

    fn relation_affinity(&self, req: &RelationRequest<'_>) -> Result<f64, BackendError> {
        let body = RelationBody {
            frame_feature: req.feature.as_slice(),
            context: req.context,
            subject: &req.subject,
            relation: req.relation,
            candidate: &req.candidate,
            prompt: req.prompt,
        };
        let reply: ScoreReply = self.post("/score/relation", &body)?;
        strict_score(reply.score)
    }

    fn qa_affinity(&self, req: &QaRequest<'_>) -> Result<Vec<f64>, BackendError> {
        let body = QaBody {
            frame_feature: req.feature.as_slice(),
            context: req.context,
            question: req.question,
            options: req.options,
        };
        let reply: ScoresReply = self.post("/score/qa", &body)?;
        if reply.scores.len() != req.options.len() {
            return Err(BackendError::Protocol(format!(
                "expected {} scores, got {}",
                req.options.len(),
                reply.scores.len()
            )));
        }
        reply.scores.into_iter().map(strict_score).collect()
    }
}
