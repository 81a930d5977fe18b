//! Small shared helpers: tokenization, stable hashing, timestamp formatting.

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};

/// Lowercased alphanumeric word tokens. Everything else is a separator.
pub(crate) fn word_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// FNV-1a 64-bit hash. Stable across platforms and releases, unlike the
/// standard library's default hasher.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Doubling retry backoff starting at 500ms: 500, 1000, 2000, ... capped at
/// 32s.
pub(crate) fn backoff_delay(attempt: u32) -> std::time::Duration {
    std::time::Duration::from_millis(500u64.saturating_mul(1 << attempt.min(6)))
}

/// RFC 3339 with second resolution and a `Z` suffix, e.g.
/// `2004-04-27T02:34:00Z`. All timestamps on the wire use this form.
pub(crate) fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an RFC 3339 timestamp, or a bare year for coarse-grained fixtures.
/// Sub-second precision is truncated; everything is normalized to UTC.
pub(crate) fn parse_ts(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        let utc = dt.with_timezone(&Utc);
        return Utc.timestamp_opt(utc.timestamp(), 0).single();
    }
    if s.len() == 4 && s.chars().all(|c| c.is_ascii_digit()) {
        let year: i32 = s.parse().ok()?;
        return Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_lowercase_and_split() {
        assert_eq!(
            word_tokens("Coffee is a drink, brewed (hot)."),
            vec!["coffee", "is", "a", "drink", "brewed", "hot"]
        );
    }

    #[test]
    fn fnv_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn timestamp_round_trip() {
        let ts = parse_ts("2004-04-27T02:34:00Z").unwrap();
        assert_eq!(format_ts(&ts), "2004-04-27T02:34:00Z");
        let year = parse_ts("2004").unwrap();
        assert_eq!(format_ts(&year), "2004-01-01T00:00:00Z");
        let offset = parse_ts("2004-04-27T02:34:00.999+02:00").unwrap();
        assert_eq!(format_ts(&offset), "2004-04-27T00:34:00Z");
        assert!(parse_ts("yesterday").is_none());
    }
}
