//! `fetch`: download the published target-sense-verification splits into
//! the configured data directory. Files already on disk are kept, so the
//! step is resumable per file; a missing labels file (unpublished gold) is
//! reported, not fatal.

use std::path::Path;

use anyhow::{bail, Context as _, Result};
use serde_json::json;

use crate::commands::Context;
use crate::logging;
use crate::workspace::write_text;

/// URL and local filename for each file of one split. The published tree
/// nests splits under capitalized directories while the files themselves
/// carry the short split prefix.
pub(crate) fn split_files(base_url: &str, split: &str) -> Vec<(String, String)> {
    let subdir = match split {
        "train" => "Training",
        "dev" => "Development",
        "test" => "Test",
        other => other,
    };
    ["examples", "definitions", "labels"]
        .iter()
        .map(|kind| {
            let name = format!("{split}_{kind}.txt");
            (format!("{base_url}/{subdir}/{name}"), name)
        })
        .collect()
}

fn download(client: &reqwest::blocking::Client, url: &str, dest: &Path) -> Result<bool> {
    let response = client
        .get(url)
        .send()
        .with_context(|| format!("requesting {url}"))?;
    if response.status().as_u16() == 404 {
        return Ok(false);
    }
    if !response.status().is_success() {
        bail!("{url} answered {}", response.status());
    }
    let body = response
        .text()
        .with_context(|| format!("reading body of {url}"))?;
    write_text(dest, &body)?;
    Ok(true)
}

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let section = &settings.file.wictsv;
    let dir = settings.wictsv_dir().expect("validated for fetch");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let client = reqwest::blocking::Client::builder()
        .user_agent(concat!("wikitide/", env!("CARGO_PKG_VERSION")))
        .timeout(std::time::Duration::from_secs(60))
        .build()
        .context("building http client")?;

    let mut fetched = 0usize;
    let mut present = 0usize;
    let mut unavailable = 0usize;
    for split in &section.fetch_splits {
        for (url, name) in split_files(&section.fetch_base_url, split) {
            let dest = dir.join(&name);
            if dest.exists() {
                present += 1;
                continue;
            }
            logging::event("fetch_file", json!({"url": url, "dest": name}));
            if download(&client, &url, &dest)? {
                fetched += 1;
            } else {
                // Gold labels for some splits were published separately and
                // may be absent; prediction-only scoring handles that.
                logging::event("fetch_unavailable", json!({"url": url}));
                unavailable += 1;
            }
        }
    }

    logging::event(
        "fetch_done",
        json!({"fetched": fetched, "present": present, "unavailable": unavailable}),
    );
    println!(
        "fetch: {fetched} downloaded, {present} already present, {unavailable} unavailable -> {}",
        dir.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::split_files;

    #[test]
    fn urls_follow_the_published_tree() {
        let files = split_files("https://example.test/data/en", "dev");
        assert_eq!(files.len(), 3);
        assert_eq!(
            files[0],
            (
                "https://example.test/data/en/Development/dev_examples.txt".to_string(),
                "dev_examples.txt".to_string()
            )
        );
        assert_eq!(files[2].1, "dev_labels.txt");

        // Unknown split names pass through as their own directory.
        let custom = split_files("http://x", "pilot");
        assert_eq!(custom[1].0, "http://x/pilot/pilot_definitions.txt");
    }
}
