//! One module per subcommand. Each `run` takes the shared context, consults
//! its manifest to honor resumability, writes its artifacts, and prints a
//! one-line summary on stdout.

pub mod annotate;
pub mod bootstrap;
pub mod drift;
pub mod fetch;
pub mod harvest;
pub mod report;
pub mod split;
pub mod wictsv;

use crate::config::Settings;
use crate::workspace::Workspace;

pub struct Context {
    pub settings: Settings,
    pub workspace: Workspace,
}

/// Truncates a vector to the `--limit` override, reporting what happened.
pub(crate) fn apply_limit<T>(items: &mut Vec<T>, limit: Option<usize>) -> bool {
    match limit {
        Some(cap) if items.len() > cap => {
            items.truncate(cap);
            true
        }
        _ => false,
    }
}

/// Pretty JSON artifact bytes: stable, diffable, newline-terminated.
pub(crate) fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact value serializes");
    text.push('\n');
    text
}
