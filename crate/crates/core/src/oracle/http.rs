//! Remote classifier over HTTP.
//!
//! Request: `POST <url>` with body `{"text": "<sentence>"}`.
//! Response: either `{"labels": [...]}` in rank order, truncated to the
//! configured top-k, or `{"score": s, "magnitude": m}`, which is bucketed into
//! NEGATIVE / NEUTRAL / POSITIVE.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{bucket_sentiment, Classifier, LabelSet, QueryError, ScoredOutput, DEFAULT_TOP_K};
use crate::derivation::Sentence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Retries after the first failed attempt.
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_timeout_ms() -> u64 {
    10_000
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

impl HttpConfig {
    pub fn new(url: impl Into<String>) -> Self {
        HttpConfig {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            top_k: default_top_k(),
        }
    }
}

pub struct HttpClassifier {
    id: String,
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct Request<'a> {
    text: &'a str,
}

enum Attempt {
    Retryable(String),
    Fatal(QueryError),
}

impl HttpClassifier {
    pub fn new(id: impl Into<String>, config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpClassifier {
            id: id.into(),
            config,
            agent,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, sentence: &Sentence) -> Result<LabelSet, Attempt> {
        let response = self
            .agent
            .post(&self.config.url)
            .send_json(Request {
                text: sentence.text(),
            })
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retryable(e.to_string()))?;
        match status {
            200..=299 => decode_response(&self.config.url, &body, self.config.top_k).map_err(Attempt::Fatal),
            429 | 500..=599 => Err(Attempt::Retryable(format!("HTTP {status}"))),
            _ => Err(Attempt::Fatal(QueryError::Transport {
                endpoint: self.config.url.clone(),
                attempts: 1,
                message: format!("HTTP {status}: {body}"),
            })),
        }
    }
}

impl Classifier for HttpClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn classify(&self, sentence: &Sentence) -> Result<LabelSet, QueryError> {
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(sentence) {
                Ok(labels) => return Ok(labels),
                Err(Attempt::Fatal(QueryError::Transport { endpoint, message, .. })) => {
                    return Err(QueryError::Transport {
                        endpoint,
                        attempts,
                        message,
                    })
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(message)) => {
                    if attempts > self.config.retries {
                        return Err(QueryError::Transport {
                            endpoint: self.config.url.clone(),
                            attempts,
                            message,
                        });
                    }
                    log::warn!(
                        "{}: attempt {attempts} failed ({message}); retrying in {delay:?}",
                        self.config.url
                    );
                    thread::sleep(delay);
                    delay = delay.saturating_mul(2);
                }
            }
        }
    }

    fn is_remote(&self) -> bool {
        true
    }
}

/// Decodes a label-list or score/magnitude response body.
pub fn decode_response(endpoint: &str, raw: &str, top_k: usize) -> Result<LabelSet, QueryError> {
    let malformed = |reason: &str| QueryError::Malformed {
        endpoint: endpoint.to_owned(),
        reason: reason.to_owned(),
        raw: raw.to_owned(),
    };
    let value: Value = serde_json::from_str(raw).map_err(|e| malformed(&e.to_string()))?;
    if let Some(labels) = value.get("labels") {
        let labels = labels
            .as_array()
            .ok_or_else(|| malformed("\"labels\" is not an array"))?
            .iter()
            .map(|l| l.as_str().ok_or_else(|| malformed("label is not a string")))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(LabelSet::from_ranked(labels, top_k));
    }
    if let (Some(score), Some(magnitude)) = (value.get("score"), value.get("magnitude")) {
        let (Some(score), Some(magnitude)) = (score.as_f64(), magnitude.as_f64()) else {
            return Err(malformed("score and magnitude must be numbers"));
        };
        let scored = ScoredOutput::new(score, magnitude).map_err(|e| malformed(&e.to_string()))?;
        return Ok(bucket_sentiment(&scored));
    }
    Err(malformed("expected \"labels\" or \"score\"/\"magnitude\""))
}
