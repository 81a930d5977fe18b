//! Wikitext stripping and lead-sentence extraction.
//!
//! The stripper is intentionally minimal: it removes the constructs that
//! routinely pollute lead sections (templates, tables, footnotes, file and
//! category links, comments, quote markup) and leaves everything else alone.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

/// No prose sentence survived markup stripping.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no prose sentence after markup stripping")]
pub struct NoProse;

/// Abbreviations whose trailing period never ends a sentence. Matching is
/// case-sensitive and applies only when the abbreviation starts a word.
pub const ABBREVIATIONS: &[&str] = &[
    "Mr.", "Mrs.", "Dr.", "St.", "c.", "No.", "vs.", "e.g.", "i.e.", "Jr.", "Sr.", "U.S.", "U.K.",
];

/// Substrings that must never survive into an extracted definition.
const BANNED: &[&str] = &["{{", "}}", "[[", "]]", "<ref"];

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

fn comment_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"(?s)<!--.*?-->")
}

fn ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"(?is)<ref[^>/]*/>|<ref[^>]*>.*?</ref>")
}

fn gallery_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"(?is)<gallery[^>]*>.*?</gallery>")
}

fn external_link_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"\[(?:https?|ftp)://[^\s\]]*\s*([^\]]*)\]")
}

fn html_tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"(?s)</?[a-zA-Z][^>]*>")
}

fn magic_word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    re(&RE, r"__[A-Z]+__")
}

/// Drops `open ... close` regions, tracking nesting. An unclosed region
/// swallows the rest of the input.
fn remove_delimited(text: &str, open: &str, close: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if rest.starts_with(open) {
            depth += 1;
            i += open.len();
        } else if depth > 0 && rest.starts_with(close) {
            depth -= 1;
            i += close.len();
        } else {
            let ch = rest.chars().next().expect("in-bounds index");
            if depth == 0 {
                out.push(ch);
            }
            i += ch.len_utf8();
        }
    }
    out
}

/// Replaces `[[target]]` with `target` and `[[target|label]]` with `label`.
/// File, image, and category links vanish together with their captions.
fn replace_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while let Some(rel) = text[i..].find("[[") {
        out.push_str(&text[i..i + rel]);
        let start = i + rel + 2;
        let mut depth = 1usize;
        let mut j = start;
        while j < text.len() && depth > 0 {
            let rest = &text[j..];
            if rest.starts_with("[[") {
                depth += 1;
                j += 2;
            } else if rest.starts_with("]]") {
                depth -= 1;
                j += 2;
            } else {
                j += rest.chars().next().expect("in-bounds index").len_utf8();
            }
        }
        if depth > 0 {
            return out;
        }
        out.push_str(&render_link(&text[start..j - 2]));
        i = j;
    }
    out.push_str(&text[i..]);
    out
}

fn render_link(inner: &str) -> String {
    let mut depth = 0usize;
    let mut first_pipe = None;
    let mut last_pipe = None;
    let mut k = 0;
    while k < inner.len() {
        let rest = &inner[k..];
        if rest.starts_with("[[") {
            depth += 1;
            k += 2;
        } else if rest.starts_with("]]") {
            depth = depth.saturating_sub(1);
            k += 2;
        } else {
            if depth == 0 && rest.starts_with('|') {
                first_pipe.get_or_insert(k);
                last_pipe = Some(k);
            }
            k += rest.chars().next().expect("in-bounds index").len_utf8();
        }
    }
    let head = &inner[..first_pipe.unwrap_or(inner.len())];
    let namespace = head.trim().trim_start_matches(':').to_ascii_lowercase();
    for dropped in ["file:", "image:", "category:"] {
        if namespace.starts_with(dropped) {
            return String::new();
        }
    }
    let label = match last_pipe {
        Some(p) => &inner[p + 1..],
        None => head,
    };
    replace_links(label)
}

/// Strips markup, leaving plain prose with original line structure.
fn strip_markup(text: &str) -> String {
    let text = comment_re().replace_all(text, "");
    let text = gallery_re().replace_all(&text, "");
    let text = ref_re().replace_all(&text, "");
    let text = remove_delimited(&text, "{{", "}}");
    let text = remove_delimited(&text, "{|", "|}");
    let text = replace_links(&text);
    let text = external_link_re().replace_all(&text, "$1");
    let text = text.replace("'''''", "").replace("'''", "").replace("''", "");
    let text = html_tag_re().replace_all(&text, "");
    magic_word_re().replace_all(&text, "").into_owned()
}

/// The first paragraph of running prose: consecutive non-empty lines starting
/// at the first line that is not a heading, list item, or table remnant.
fn lead_paragraph(stripped: &str) -> Option<String> {
    let is_marker = |line: &str| {
        matches!(
            line.chars().next(),
            Some('=') | Some('*') | Some(':') | Some(';') | Some('#') | Some('|') | Some('!')
        )
    };
    let mut collected: Vec<&str> = Vec::new();
    for raw in stripped.lines() {
        let line = raw.trim();
        if line.is_empty() || is_marker(line) {
            if collected.is_empty() {
                continue;
            }
            break;
        }
        collected.push(line);
    }
    if collected.is_empty() {
        None
    } else {
        Some(collected.join(" "))
    }
}

fn is_protected_abbreviation(chars: &[char], dot: usize, extra: &[String]) -> bool {
    let matches_at = |abbr: &str| {
        let alen = abbr.chars().count();
        if alen == 0 || alen > dot + 1 {
            return false;
        }
        let start = dot + 1 - alen;
        if !chars[start..=dot].iter().copied().eq(abbr.chars()) {
            return false;
        }
        start == 0 || !chars[start - 1].is_alphanumeric()
    };
    ABBREVIATIONS.iter().any(|a| matches_at(a)) || extra.iter().any(|a| matches_at(a))
}

/// Splits off the first sentence: text up to the first `.`, `?`, or `!` that
/// is followed by whitespace and an uppercase letter, or that ends the text.
/// Periods closing a protected abbreviation do not count.
fn first_sentence(paragraph: &str, extra: &[String]) -> String {
    let chars: Vec<char> = paragraph.chars().collect();
    for (i, &ch) in chars.iter().enumerate() {
        if !matches!(ch, '.' | '?' | '!') {
            continue;
        }
        if ch == '.' && is_protected_abbreviation(&chars, i, extra) {
            continue;
        }
        let mut j = i + 1;
        if j == chars.len() {
            return chars.iter().collect();
        }
        if !chars[j].is_whitespace() {
            continue;
        }
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j == chars.len() || chars[j].is_uppercase() {
            return chars[..=i].iter().collect();
        }
    }
    paragraph.to_string()
}

/// Extracts the first prose sentence of a revision's wikitext.
pub fn extract_first_sentence(wikitext: &str) -> Result<String, NoProse> {
    extract_first_sentence_with(wikitext, &[])
}

/// Like [`extract_first_sentence`], with extra protected abbreviations.
pub fn extract_first_sentence_with(
    wikitext: &str,
    extra_abbreviations: &[String],
) -> Result<String, NoProse> {
    if wikitext.trim_start().to_ascii_lowercase().starts_with("#redirect") {
        return Err(NoProse);
    }
    let stripped = strip_markup(wikitext);
    let paragraph = lead_paragraph(&stripped).ok_or(NoProse)?;
    let sentence = first_sentence(&paragraph, extra_abbreviations);
    let normalized = sentence.split_whitespace().collect::<Vec<_>>().join(" ");
    if normalized.is_empty() || BANNED.iter().any(|b| normalized.contains(b)) {
        return Err(NoProse);
    }
    Ok(normalized)
}
