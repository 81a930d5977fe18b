//! Step manifests: the parameter and input digests a subcommand ran with,
//! plus the outputs it wrote. A step is skipped when its recorded manifest
//! matches the one computed for the current invocation and every listed
//! output still exists. Manifests contain no timestamps or absolute paths,
//! so two runs of the same pipeline produce byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};
use wikitide::content_digest;

use crate::workspace::{write_text, Workspace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepManifest {
    pub step: String,
    /// Digest of the step's effective parameters (config plus overrides).
    pub params: String,
    /// Content digests keyed by the input path as configured.
    pub inputs: BTreeMap<String, String>,
    /// Workspace-relative outputs the step promises to leave behind.
    pub outputs: Vec<String>,
}

impl StepManifest {
    pub fn new(step: &str, params: &serde_json::Value, outputs: &[&str]) -> StepManifest {
        StepManifest {
            step: step.to_string(),
            params: content_digest(params.to_string().as_bytes()),
            inputs: BTreeMap::new(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading step input {}", path.display()))?;
        self.inputs.insert(name.to_string(), content_digest(&bytes));
        Ok(())
    }
}

/// True when the recorded manifest equals `current` and all outputs exist.
pub fn is_current(ws: &Workspace, current: &StepManifest) -> bool {
    let path = ws.manifest(&current.step);
    let Ok(raw) = std::fs::read_to_string(&path) else {
        return false;
    };
    let Ok(recorded) = serde_json::from_str::<StepManifest>(&raw) else {
        return false;
    };
    recorded == *current && current.outputs.iter().all(|out| ws.path(out).exists())
}

pub fn record(ws: &Workspace, manifest: &StepManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_text(&ws.manifest(&manifest.step), &format!("{json}\n"))
}
