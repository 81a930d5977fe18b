//! Annotator clients: an HTTP chat endpoint for real runs, plus scripted and
//! heuristic clients for tests and offline pipelines.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use super::{AnnotatorSettings, AnnotatorVote, Label};
use crate::textutil::{backoff_delay, fnv1a64, word_tokens};

/// Produces a raw text completion for an annotation prompt.
pub trait AnnotatorClient {
    fn complete(&self, settings: &AnnotatorSettings, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Error)]
pub enum ClientError {
    /// Network-level failure; the pool retries these.
    #[error("transport failure: {message}")]
    Transport { message: String },
    /// The endpoint answered but not in the expected shape.
    #[error("protocol failure: {message}")]
    Protocol { message: String },
    /// A scripted client ran out of canned responses.
    #[error("scripted client exhausted after {served} response(s)")]
    ScriptExhausted { served: usize },
}

/// Serves a fixed sequence of canned responses, one per `complete` call.
pub struct FixedScriptClient {
    responses: Mutex<(VecDeque<String>, usize)>,
}

impl FixedScriptClient {
    pub fn new(responses: Vec<String>) -> Self {
        FixedScriptClient {
            responses: Mutex::new((responses.into(), 0)),
        }
    }
}

impl AnnotatorClient for FixedScriptClient {
    fn complete(&self, _settings: &AnnotatorSettings, _prompt: &str) -> Result<String, ClientError> {
        let mut guard = self.responses.lock().expect("script mutex");
        match guard.0.pop_front() {
            Some(response) => {
                guard.1 += 1;
                Ok(response)
            }
            None => Err(ClientError::ScriptExhausted { served: guard.1 }),
        }
    }
}

/// Adapts a closure into a client; handy for tests.
pub struct FnClient<F>(pub F);

impl<F: Fn(&str) -> Result<String, ClientError>> AnnotatorClient for FnClient<F> {
    fn complete(&self, _settings: &AnnotatorSettings, prompt: &str) -> Result<String, ClientError> {
        (self.0)(prompt)
    }
}

fn numbered_line_re(n: u8) -> &'static Regex {
    static RE1: OnceLock<Regex> = OnceLock::new();
    static RE2: OnceLock<Regex> = OnceLock::new();
    let (cell, pattern) = match n {
        1 => (&RE1, r"(?m)^\s*1\.\s*(.*)$"),
        _ => (&RE2, r"(?m)^\s*2\.\s*(.*)$"),
    };
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn timestamp_prefix_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z\s*:?\s*").expect("static regex")
    })
}

/// Deterministic offline annotator. It reads the two definitions from the
/// prompt's numbered lines (`1. <timestamp>:<definition>`), scores their
/// token overlap, and votes by thresholding that overlap. A small jitter
/// derived from the prompt bytes makes the four variants disagree near the
/// thresholds, which exercises every consensus rule.
pub struct HeuristicClient;

fn jaccard(a: &[String], b: &[String]) -> f64 {
    use std::collections::BTreeSet;
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count() as f64;
    let union = sa.union(&sb).count() as f64;
    inter / union
}

impl HeuristicClient {
    fn definitions(prompt: &str) -> Option<(String, String)> {
        let grab = |n: u8| {
            numbered_line_re(n)
                .captures(prompt)
                .map(|c| timestamp_prefix_re().replace(&c[1], "").trim().to_string())
        };
        Some((grab(1)?, grab(2)?))
    }
}

impl AnnotatorClient for HeuristicClient {
    fn complete(&self, _settings: &AnnotatorSettings, prompt: &str) -> Result<String, ClientError> {
        let Some((def1, def2)) = Self::definitions(prompt) else {
            return Ok("could not locate the two definitions".into());
        };
        let similarity = jaccard(&word_tokens(&def1), &word_tokens(&def2));
        let jitter = ((fnv1a64(prompt.as_bytes()) % 1001) as f64 / 1000.0 - 0.5) * 0.1;
        let high = 0.72 + jitter;
        let low = 0.28 + jitter;
        let (label, margin, summary) = if similarity >= high {
            (Label::Same, similarity - high, "definitions overlap heavily")
        } else if similarity <= low {
            (Label::Fundamental, low - similarity, "definitions share little content")
        } else {
            (
                Label::NonFundamental,
                (similarity - low).min(high - similarity),
                "definitions overlap partially",
            )
        };
        let confidence = (5.0 + (margin * 20.0).round()).min(10.0) as u8;
        let vote = AnnotatorVote::new(
            label,
            confidence,
            format!("{summary} (token overlap {similarity:.2})"),
        )
        .expect("confidence in range");
        Ok(vote.render())
    }
}

/// Chat-completions endpoint client. The endpoint URL, model name, and
/// optional bearer key come from the constructor or from the
/// `ANNOTATOR_ENDPOINT`, `ANNOTATOR_MODEL`, and `ANNOTATOR_API_KEY`
/// environment variables.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, ClientError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| ClientError::Transport {
                message: e.to_string(),
            })?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            max_retries: 4,
            http,
        })
    }

    pub fn from_env() -> Result<Self, ClientError> {
        let endpoint = std::env::var("ANNOTATOR_ENDPOINT").map_err(|_| ClientError::Protocol {
            message: "ANNOTATOR_ENDPOINT is not set".into(),
        })?;
        let model = std::env::var("ANNOTATOR_MODEL").map_err(|_| ClientError::Protocol {
            message: "ANNOTATOR_MODEL is not set".into(),
        })?;
        Self::new(endpoint, model, std::env::var("ANNOTATOR_API_KEY").ok())
    }
}

impl AnnotatorClient for HttpChatClient {
    fn complete(&self, settings: &AnnotatorSettings, prompt: &str) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": settings.temperature,
            "top_p": settings.top_p,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut attempt = 0;
        loop {
            let mut request = self.http.post(&self.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let result = request.send();
            let retryable = match &result {
                Ok(resp) => resp.status().as_u16() == 429 || resp.status().is_server_error(),
                Err(_) => true,
            };
            if retryable && attempt < self.max_retries {
                std::thread::sleep(backoff_delay(attempt));
                attempt += 1;
                continue;
            }
            let resp = result.map_err(|e| ClientError::Transport {
                message: e.to_string(),
            })?;
            let status = resp.status();
            if !status.is_success() {
                return Err(ClientError::Transport {
                    message: format!("status {status} from {}", self.endpoint),
                });
            }
            let value: serde_json::Value = resp.json().map_err(|e| ClientError::Protocol {
                message: format!("bad json body: {e}"),
            })?;
            return value["choices"][0]["message"]["content"]
                .as_str()
                .map(str::to_string)
                .ok_or_else(|| ClientError::Protocol {
                    message: "missing choices[0].message.content".into(),
                });
        }
    }
}
