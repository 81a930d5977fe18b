//! The versioned on-disk workspace every subcommand writes into.
//!
//! ```text
//! workspace.json           layout version marker
//! pairs.jsonl              harvested definition pairs
//! harvest_stats.json       harvest counters
//! labeled.jsonl            consensus-labeled pairs with vote provenance
//! discarded.jsonl          pairs dropped during annotation, with reasons
//! vote_matrix.csv          per-pair vote counts for agreement statistics
//! agreement.json           Fleiss kappa over the vote matrix
//! splits/{ts,hs,ds}.jsonl  training / held-out / pool partitions
//! checkpoint/              sweep-loop checkpoint (see its own layout docs)
//! report/metrics.{json,txt}
//! drift/drift.{csv,svg}
//! wictsv/predictions.tsv, wictsv/report.json
//! manifests/<step>.json    resume fingerprints, one per subcommand
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};

pub const LAYOUT_VERSION: &str = "ws-v1";

#[derive(Debug)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    /// Creates the directory if needed and stamps or checks the layout
    /// version, refusing to mix layouts within one directory.
    pub fn open(root: &Path) -> Result<Workspace> {
        fs::create_dir_all(root)
            .with_context(|| format!("creating workspace {}", root.display()))?;
        let marker = root.join("workspace.json");
        if marker.exists() {
            let raw = fs::read_to_string(&marker)
                .with_context(|| format!("reading {}", marker.display()))?;
            let value: serde_json::Value = serde_json::from_str(&raw)
                .with_context(|| format!("parsing {}", marker.display()))?;
            let layout = value.get("layout").and_then(|v| v.as_str()).unwrap_or("");
            if layout != LAYOUT_VERSION {
                bail!(
                    "workspace {} uses layout {layout:?}, this build writes {LAYOUT_VERSION:?}",
                    root.display()
                );
            }
        } else {
            fs::write(
                &marker,
                format!("{{\n  \"layout\": \"{LAYOUT_VERSION}\"\n}}\n"),
            )
            .with_context(|| format!("writing {}", marker.display()))?;
        }
        Ok(Workspace {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn pairs(&self) -> PathBuf {
        self.path("pairs.jsonl")
    }

    pub fn harvest_stats(&self) -> PathBuf {
        self.path("harvest_stats.json")
    }

    pub fn labeled(&self) -> PathBuf {
        self.path("labeled.jsonl")
    }

    pub fn discarded(&self) -> PathBuf {
        self.path("discarded.jsonl")
    }

    pub fn vote_matrix(&self) -> PathBuf {
        self.path("vote_matrix.csv")
    }

    pub fn agreement(&self) -> PathBuf {
        self.path("agreement.json")
    }

    pub fn split_ts(&self) -> PathBuf {
        self.path("splits/ts.jsonl")
    }

    pub fn split_hs(&self) -> PathBuf {
        self.path("splits/hs.jsonl")
    }

    pub fn split_ds(&self) -> PathBuf {
        self.path("splits/ds.jsonl")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.path("checkpoint")
    }

    pub fn metrics_json(&self) -> PathBuf {
        self.path("report/metrics.json")
    }

    pub fn metrics_txt(&self) -> PathBuf {
        self.path("report/metrics.txt")
    }

    pub fn drift_csv(&self) -> PathBuf {
        self.path("drift/drift.csv")
    }

    pub fn drift_svg(&self) -> PathBuf {
        self.path("drift/drift.svg")
    }

    pub fn wictsv_predictions(&self) -> PathBuf {
        self.path("wictsv/predictions.tsv")
    }

    pub fn wictsv_report(&self) -> PathBuf {
        self.path("wictsv/report.json")
    }

    pub fn manifest(&self, step: &str) -> PathBuf {
        self.path(&format!("manifests/{step}.json"))
    }
}

/// Writes `text`, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_stamps_and_then_accepts_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ws");
        Workspace::open(&root).unwrap();
        let marker = fs::read_to_string(root.join("workspace.json")).unwrap();
        assert!(marker.contains(LAYOUT_VERSION));
        Workspace::open(&root).unwrap();
    }

    #[test]
    fn open_refuses_a_foreign_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ws");
        fs::create_dir_all(&root).unwrap();
        fs::write(root.join("workspace.json"), "{\"layout\": \"ws-v0\"}\n").unwrap();
        let err = Workspace::open(&root).unwrap_err();
        assert!(err.to_string().contains("ws-v0"), "{err}");
    }
}
