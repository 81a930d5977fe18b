//! Live MediaWiki Action API source.
//!
//! Pages are drawn via `list=random`, then each page's full revision history
//! is paginated with `prop=revisions` before individual revision contents are
//! fetched on demand. Requests are rate-capped and retried with exponential
//! backoff on transport errors, 429, and 5xx responses.

use std::thread::sleep;
use std::time::{Duration, Instant};

use rand::RngCore;
use serde_json::Value;

use super::source::{RevisionSource, SourceError};
use super::{PageTimeline, RevisionRef};
use crate::textutil::{backoff_delay, parse_ts};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub api_url: String,
    pub user_agent: String,
    /// Minimum spacing between consecutive requests.
    pub min_request_interval_ms: u64,
    /// Revisions fetched per history page (API maximum for anonymous use).
    pub timeline_batch: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            api_url: "https://en.wikipedia.org/w/api.php".into(),
            user_agent: concat!("wikitide/", env!("CARGO_PKG_VERSION")).into(),
            min_request_interval_ms: 1_000,
            timeline_batch: 500,
            max_retries: 4,
            timeout_secs: 30,
        }
    }
}

pub struct LiveSource {
    cfg: LiveConfig,
    http: reqwest::blocking::Client,
    last_request: Option<Instant>,
}

pub(crate) fn random_page_params() -> Vec<(String, String)> {
    vec![
        ("action".into(), "query".into()),
        ("format".into(), "json".into()),
        ("formatversion".into(), "2".into()),
        ("list".into(), "random".into()),
        ("rnnamespace".into(), "0".into()),
        ("rnlimit".into(), "1".into()),
    ]
}

pub(crate) fn timeline_params(
    title: &str,
    batch: usize,
    cont: Option<&str>,
) -> Vec<(String, String)> {
    let mut params = vec![
        ("action".into(), "query".into()),
        ("format".into(), "json".into()),
        ("formatversion".into(), "2".into()),
        ("prop".into(), "revisions".into()),
        ("titles".into(), title.into()),
        ("rvprop".into(), "ids|timestamp".into()),
        ("rvdir".into(), "newer".into()),
        ("rvlimit".into(), batch.to_string()),
    ];
    if let Some(c) = cont {
        params.push(("rvcontinue".into(), c.into()));
    }
    params
}

pub(crate) fn content_params(revision_id: u64) -> Vec<(String, String)> {
    vec![
        ("action".into(), "query".into()),
        ("format".into(), "json".into()),
        ("formatversion".into(), "2".into()),
        ("prop".into(), "revisions".into()),
        ("revids".into(), revision_id.to_string()),
        ("rvprop".into(), "ids|content".into()),
        ("rvslots".into(), "main".into()),
    ]
}

impl LiveSource {
    pub fn new(cfg: LiveConfig) -> Result<Self, SourceError> {
        let http = reqwest::blocking::Client::builder()
            .user_agent(cfg.user_agent.clone())
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| SourceError::Http {
                message: e.to_string(),
            })?;
        Ok(LiveSource {
            cfg,
            http,
            last_request: None,
        })
    }

    fn throttle(&mut self) {
        let interval = Duration::from_millis(self.cfg.min_request_interval_ms);
        if let Some(last) = self.last_request {
            let elapsed = last.elapsed();
            if elapsed < interval {
                sleep(interval - elapsed);
            }
        }
        self.last_request = Some(Instant::now());
    }

    fn get_json(&mut self, params: &[(String, String)]) -> Result<Value, SourceError> {
        let mut attempt = 0;
        loop {
            self.throttle();
            let result = self.http.get(&self.cfg.api_url).query(params).send();
            let retryable = match &result {
                Ok(resp) => {
                    let status = resp.status();
                    status.as_u16() == 429 || status.is_server_error()
                }
                Err(_) => true,
            };
            if retryable && attempt < self.cfg.max_retries {
                sleep(backoff_delay(attempt));
                attempt += 1;
                continue;
            }
            let resp = result.map_err(|e| SourceError::Http {
                message: e.to_string(),
            })?;
            let status = resp.status();
            if !status.is_success() {
                return Err(SourceError::Http {
                    message: format!("status {status} from {}", self.cfg.api_url),
                });
            }
            return resp.json().map_err(|e| SourceError::Api {
                message: format!("bad json body: {e}"),
            });
        }
    }

    fn random_title(&mut self) -> Result<String, SourceError> {
        let body = self.get_json(&random_page_params())?;
        body["query"]["random"][0]["title"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| SourceError::Api {
                message: "missing query.random[0].title".into(),
            })
    }

    fn full_timeline(&mut self, title: &str) -> Result<PageTimeline, SourceError> {
        let mut revisions = Vec::new();
        let mut cont: Option<String> = None;
        loop {
            let body = self.get_json(&timeline_params(
                title,
                self.cfg.timeline_batch,
                cont.as_deref(),
            ))?;
            let page = &body["query"]["pages"][0];
            if page["missing"].as_bool() == Some(true) {
                return Err(SourceError::UnknownPage {
                    title: title.to_string(),
                });
            }
            if let Some(revs) = page["revisions"].as_array() {
                for rev in revs {
                    let (Some(revid), Some(stamp)) = (rev["revid"].as_u64(), rev["timestamp"].as_str())
                    else {
                        continue;
                    };
                    let Some(timestamp) = parse_ts(stamp) else {
                        continue;
                    };
                    if timestamp.timestamp() <= 0 {
                        continue;
                    }
                    revisions.push(RevisionRef {
                        page_title: title.to_string(),
                        revision_id: revid,
                        timestamp,
                    });
                }
            }
            match body["continue"]["rvcontinue"].as_str() {
                Some(c) => cont = Some(c.to_string()),
                None => break,
            }
        }
        Ok(PageTimeline {
            title: title.to_string(),
            revisions,
        })
    }
}

impl RevisionSource for LiveSource {
    fn next_timeline(
        &mut self,
        _rng: &mut dyn RngCore,
    ) -> Result<Option<PageTimeline>, SourceError> {
        let title = self.random_title()?;
        Ok(Some(self.full_timeline(&title)?))
    }

    fn wikitext(&mut self, title: &str, revision_id: u64) -> Result<String, SourceError> {
        let body = self.get_json(&content_params(revision_id))?;
        body["query"]["pages"][0]["revisions"][0]["slots"]["main"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| SourceError::UnknownRevision {
                title: title.to_string(),
                revision_id,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_saturates() {
        assert_eq!(backoff_delay(0), Duration::from_millis(500));
        assert_eq!(backoff_delay(1), Duration::from_millis(1_000));
        assert_eq!(backoff_delay(3), Duration::from_millis(4_000));
        assert_eq!(backoff_delay(60), backoff_delay(6));
    }

    #[test]
    fn request_params_are_wellformed() {
        let p = timeline_params("Coffee", 500, None);
        assert!(p.contains(&("titles".into(), "Coffee".into())));
        assert!(p.contains(&("rvprop".into(), "ids|timestamp".into())));
        assert!(!p.iter().any(|(k, _)| k == "rvcontinue"));

        let p = timeline_params("Coffee", 500, Some("cursor|123"));
        assert!(p.contains(&("rvcontinue".into(), "cursor|123".into())));

        let p = content_params(42);
        assert!(p.contains(&("revids".into(), "42".into())));
        assert!(p.contains(&("rvslots".into(), "main".into())));

        let p = random_page_params();
        assert!(p.contains(&("rnnamespace".into(), "0".into())));
    }
}
