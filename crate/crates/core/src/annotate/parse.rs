//! Lenient parsing of annotator responses.
//!
//! Annotators are asked for a Python-style dictionary with `label`,
//! `confidence`, and `explanation` keys. Real responses wrap it in prose,
//! swap quote styles, or double the braces, so each key is extracted
//! independently instead of parsing the dictionary as a whole.

use std::sync::OnceLock;

use regex::Regex;

use super::{AnnotateError, AnnotatorVote, Label};

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?i)['"]?label['"]?\s*:\s*['"]?\s*(-?\d+)"#).expect("static regex"))
}

fn confidence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)['"]?confidence['"]?\s*:\s*['"]?\s*(-?\d+)"#).expect("static regex")
    })
}

fn explanation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?is)['"]?explanation['"]?\s*:\s*(.*)$"#).expect("static regex")
    })
}

fn snippet(raw: &str) -> String {
    raw.chars().take(80).collect()
}

fn unparseable(raw: &str, reason: impl Into<String>) -> AnnotateError {
    AnnotateError::UnparseableVote {
        reason: reason.into(),
        snippet: snippet(raw),
    }
}

/// The explanation value: a quoted span (first quote to the matching last
/// quote, so inner quotes survive), or everything up to the closing braces.
fn extract_explanation(region: &str) -> String {
    let region = region.trim_start();
    if let Some(quote) = region.chars().next().filter(|&c| c == '\'' || c == '"') {
        let rest = &region[1..];
        if let Some(last) = rest.rfind(quote) {
            return rest[..last].to_string();
        }
    }
    let cut = region
        .rfind("}}")
        .or_else(|| region.rfind('}'))
        .unwrap_or(region.len());
    region[..cut].trim().trim_end_matches(',').trim_end().to_string()
}

/// Extracts a vote from a raw annotator response.
pub fn parse_vote(raw_response: &str) -> Result<AnnotatorVote, AnnotateError> {
    let label_value: i64 = label_re()
        .captures(raw_response)
        .ok_or_else(|| unparseable(raw_response, "no label key"))?[1]
        .parse()
        .map_err(|_| unparseable(raw_response, "label is not an integer"))?;
    let label = Label::from_u8(u8::try_from(label_value).unwrap_or(u8::MAX))
        .ok_or(AnnotateError::LabelOutOfRange { value: label_value })?;

    let confidence_value: i64 = confidence_re()
        .captures(raw_response)
        .ok_or_else(|| unparseable(raw_response, "no confidence key"))?[1]
        .parse()
        .map_err(|_| unparseable(raw_response, "confidence is not an integer"))?;
    if !(0..=10).contains(&confidence_value) {
        return Err(unparseable(
            raw_response,
            format!("confidence {confidence_value} outside 0..=10"),
        ));
    }

    let explanation_region = explanation_re()
        .captures(raw_response)
        .ok_or_else(|| unparseable(raw_response, "no explanation key"))?
        .get(1)
        .expect("group 1 exists")
        .as_str();
    let explanation = extract_explanation(explanation_region);

    AnnotatorVote::new(label, confidence_value as u8, explanation)
}
