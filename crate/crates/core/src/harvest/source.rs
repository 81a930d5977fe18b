//! Revision sources: the offline newline-delimited JSON dump used by tests
//! and batch runs, plus the trait the live API client also implements.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::Deserialize;
use thiserror::Error;

use super::{PageTimeline, RevisionRef};
use crate::textutil::parse_ts;

/// Supplies page timelines and revision contents to the harvester.
pub trait RevisionSource {
    /// The next candidate page, or `None` when the source is exhausted.
    /// Implementations draw any randomness they need from `rng` so that a
    /// fixed seed reproduces the same page sequence.
    fn next_timeline(&mut self, rng: &mut dyn RngCore)
        -> Result<Option<PageTimeline>, SourceError>;

    /// Full wikitext of one revision of a page.
    fn wikitext(&mut self, title: &str, revision_id: u64) -> Result<String, SourceError>;
}

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("failed to read dump: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dump record on line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("unknown page {title:?}")]
    UnknownPage { title: String },
    #[error("unknown revision {revision_id} of page {title:?}")]
    UnknownRevision { title: String, revision_id: u64 },
    #[error("http request failed: {message}")]
    Http { message: String },
    #[error("unexpected api response: {message}")]
    Api { message: String },
}

#[derive(Debug, Deserialize)]
struct DumpPage {
    title: String,
    revisions: Vec<DumpRevision>,
}

#[derive(Debug, Deserialize)]
struct DumpRevision {
    revid: u64,
    timestamp: String,
    wikitext: String,
}

struct StoredPage {
    timeline: PageTimeline,
    content: HashMap<u64, String>,
}

/// A page as a plain `(title, [(revid, timestamp, wikitext)])` tuple, the
/// shape [`OfflineSource::from_pages`] accepts.
pub type RawPage = (String, Vec<(u64, String, String)>);

/// An in-memory snapshot of page histories, loaded from newline-delimited
/// JSON: one `{"title", "revisions": [{"revid", "timestamp", "wikitext"}]}`
/// object per line.
pub struct OfflineSource {
    pages: Vec<StoredPage>,
    by_title: HashMap<String, usize>,
    order: Vec<usize>,
    cursor: usize,
    started: bool,
    with_replacement: bool,
}

impl OfflineSource {
    pub fn from_path(path: &Path) -> Result<Self, SourceError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, SourceError> {
        let mut pages = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DumpPage =
                serde_json::from_str(&line).map_err(|e| SourceError::MalformedRecord {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            pages.push(Self::validate_page(record, idx + 1)?);
        }
        Ok(Self::from_stored(pages))
    }

    /// Builds a source from `(title, [(revid, timestamp, wikitext)])` tuples.
    pub fn from_pages(pages: Vec<RawPage>) -> Result<Self, SourceError> {
        let mut stored = Vec::new();
        for (line, (title, revisions)) in pages.into_iter().enumerate() {
            let record = DumpPage {
                title,
                revisions: revisions
                    .into_iter()
                    .map(|(revid, timestamp, wikitext)| DumpRevision {
                        revid,
                        timestamp,
                        wikitext,
                    })
                    .collect(),
            };
            stored.push(Self::validate_page(record, line + 1)?);
        }
        Ok(Self::from_stored(stored))
    }

    /// Samples pages with replacement instead of visiting each page once.
    /// The source then never reports exhaustion.
    pub fn with_replacement(mut self, yes: bool) -> Self {
        self.with_replacement = yes;
        self
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    fn from_stored(pages: Vec<StoredPage>) -> Self {
        let by_title = pages
            .iter()
            .enumerate()
            .map(|(i, p)| (p.timeline.title.clone(), i))
            .collect();
        OfflineSource {
            pages,
            by_title,
            order: Vec::new(),
            cursor: 0,
            started: false,
            with_replacement: false,
        }
    }

    fn validate_page(record: DumpPage, line: usize) -> Result<StoredPage, SourceError> {
        let malformed = |message: String| SourceError::MalformedRecord { line, message };
        if record.title.trim().is_empty() {
            return Err(malformed("empty page title".into()));
        }
        let mut seen = HashMap::new();
        let mut revisions = Vec::with_capacity(record.revisions.len());
        let mut content = HashMap::with_capacity(record.revisions.len());
        for rev in record.revisions {
            if seen.insert(rev.revid, ()).is_some() {
                return Err(malformed(format!(
                    "duplicate revision id {} in page {:?}",
                    rev.revid, record.title
                )));
            }
            let timestamp = parse_ts(&rev.timestamp).ok_or_else(|| {
                malformed(format!(
                    "unparseable timestamp {:?} in page {:?}",
                    rev.timestamp, record.title
                ))
            })?;
            if timestamp.timestamp() <= 0 {
                return Err(malformed(format!(
                    "timestamp {:?} in page {:?} is not after the epoch",
                    rev.timestamp, record.title
                )));
            }
            revisions.push(RevisionRef {
                page_title: record.title.clone(),
                revision_id: rev.revid,
                timestamp,
            });
            content.insert(rev.revid, rev.wikitext);
        }
        Ok(StoredPage {
            timeline: PageTimeline {
                title: record.title,
                revisions,
            },
            content,
        })
    }
}

impl RevisionSource for OfflineSource {
    fn next_timeline(
        &mut self,
        rng: &mut dyn RngCore,
    ) -> Result<Option<PageTimeline>, SourceError> {
        if self.pages.is_empty() {
            return Ok(None);
        }
        if self.with_replacement {
            let idx = rng.random_range(0..self.pages.len());
            return Ok(Some(self.pages[idx].timeline.clone()));
        }
        if !self.started {
            self.order = (0..self.pages.len()).collect();
            self.order.shuffle(rng);
            self.started = true;
        }
        if self.cursor >= self.order.len() {
            return Ok(None);
        }
        let idx = self.order[self.cursor];
        self.cursor += 1;
        Ok(Some(self.pages[idx].timeline.clone()))
    }

    fn wikitext(&mut self, title: &str, revision_id: u64) -> Result<String, SourceError> {
        let &idx = self
            .by_title
            .get(title)
            .ok_or_else(|| SourceError::UnknownPage {
                title: title.to_string(),
            })?;
        self.pages[idx]
            .content
            .get(&revision_id)
            .cloned()
            .ok_or_else(|| SourceError::UnknownRevision {
                title: title.to_string(),
                revision_id,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn demo() -> Vec<RawPage> {
        vec![
            (
                "A".into(),
                vec![(1, "2004-01-01T00:00:00Z".into(), "A text.".into())],
            ),
            (
                "B".into(),
                vec![(2, "2005".into(), "B text.".into())],
            ),
            (
                "C".into(),
                vec![(3, "2006-01-01T00:00:00Z".into(), "C text.".into())],
            ),
        ]
    }

    #[test]
    fn visits_every_page_once_in_seeded_order() {
        let mut src = OfflineSource::from_pages(demo()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut titles = Vec::new();
        while let Some(tl) = src.next_timeline(&mut rng).unwrap() {
            titles.push(tl.title);
        }
        let mut sorted = titles.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["A", "B", "C"]);

        let mut src2 = OfflineSource::from_pages(demo()).unwrap();
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let mut titles2 = Vec::new();
        while let Some(tl) = src2.next_timeline(&mut rng2).unwrap() {
            titles2.push(tl.title);
        }
        assert_eq!(titles, titles2);
    }

    #[test]
    fn replacement_mode_never_exhausts() {
        let mut src = OfflineSource::from_pages(demo()).unwrap().with_replacement(true);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert!(src.next_timeline(&mut rng).unwrap().is_some());
        }
    }

    #[test]
    fn wikitext_lookup_and_errors() {
        let mut src = OfflineSource::from_pages(demo()).unwrap();
        assert_eq!(src.wikitext("A", 1).unwrap(), "A text.");
        assert!(matches!(
            src.wikitext("A", 99),
            Err(SourceError::UnknownRevision { revision_id: 99, .. })
        ));
        assert!(matches!(
            src.wikitext("Z", 1),
            Err(SourceError::UnknownPage { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_revision_ids_and_bad_timestamps() {
        let dup = vec![(
            "A".to_string(),
            vec![
                (1, "2004-01-01T00:00:00Z".to_string(), "x".to_string()),
                (1, "2005-01-01T00:00:00Z".to_string(), "y".to_string()),
            ],
        )];
        assert!(matches!(
            OfflineSource::from_pages(dup),
            Err(SourceError::MalformedRecord { .. })
        ));

        let bad_ts = vec![(
            "A".to_string(),
            vec![(1, "not-a-date".to_string(), "x".to_string())],
        )];
        assert!(matches!(
            OfflineSource::from_pages(bad_ts),
            Err(SourceError::MalformedRecord { .. })
        ));

        let epoch = vec![(
            "A".to_string(),
            vec![(1, "1970-01-01T00:00:00Z".to_string(), "x".to_string())],
        )];
        assert!(matches!(
            OfflineSource::from_pages(epoch),
            Err(SourceError::MalformedRecord { .. })
        ));
    }

    #[test]
    fn parses_ndjson_lines() {
        let data = r#"{"title":"A","revisions":[{"revid":1,"timestamp":"2004-01-01T00:00:00Z","wikitext":"'''A''' is a letter."}]}
{"title":"B","revisions":[{"revid":2,"timestamp":"2010","wikitext":"'''B''' is a letter."}]}"#;
        let src = OfflineSource::from_reader(std::io::Cursor::new(data)).unwrap();
        assert_eq!(src.len(), 2);
    }
}
