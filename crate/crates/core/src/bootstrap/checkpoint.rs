//! On-disk run layout:
//!
//! ```text
//! config.json                     sweep-loop configuration snapshot
//! status.json                     stop reason plus sweep count
//! sweeps/sweep-NNNN.added.jsonl   pool items promoted at that sweep
//! sweeps/sweep-NNNN.metrics.json  held-out metrics after that sweep
//! final_ts.jsonl                  final training set with provenance
//! ```
//!
//! Writes are byte-deterministic for a fixed run so repeated executions can
//! be compared with a plain diff.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    BootstrapConfig, BootstrapRun, BootstrapStatus, ExampleOrigin, IterationRecord,
    LabeledExample, PseudoExample,
};
use crate::annotate::Label;
use crate::eval::MetricsReport;
use crate::harvest::PairRecord;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, reason: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// JSONL row for one promoted pool item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddedRecord {
    #[serde(flatten)]
    pub pair: PairRecord,
    pub label: Label,
    pub confidence: f64,
}

/// JSONL row for one final-training-set example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TsRecord {
    #[serde(flatten)]
    pub pair: PairRecord,
    pub label: Label,
    #[serde(flatten)]
    pub origin: ExampleOrigin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatusRecord {
    #[serde(flatten)]
    pub outcome: BootstrapStatus,
    pub sweeps: usize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(bytes).map_err(io_err(path))?;
    Ok(())
}

fn sweep_paths(dir: &Path, sweep: usize) -> (PathBuf, PathBuf) {
    let sweeps = dir.join("sweeps");
    (
        sweeps.join(format!("sweep-{sweep:04}.added.jsonl")),
        sweeps.join(format!("sweep-{sweep:04}.metrics.json")),
    )
}

/// Writes a completed run under `dir`, creating it as needed. Existing
/// files from a previous run of the same directory are overwritten.
pub fn write_checkpoint(
    dir: &Path,
    cfg: &BootstrapConfig,
    run: &BootstrapRun,
) -> Result<(), CheckpointError> {
    let sweeps_dir = dir.join("sweeps");
    fs::create_dir_all(&sweeps_dir).map_err(io_err(&sweeps_dir))?;

    let config_json = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_atomic(&dir.join("config.json"), config_json.as_bytes())?;

    let status = StatusRecord {
        outcome: run.status.clone(),
        sweeps: run.history.len(),
    };
    let status_json = serde_json::to_string_pretty(&status).expect("status serializes");
    write_atomic(&dir.join("status.json"), status_json.as_bytes())?;

    for record in &run.history {
        let (added_path, metrics_path) = sweep_paths(dir, record.sweep);
        let mut added = String::new();
        for example in &record.added {
            let row = AddedRecord {
                pair: PairRecord::from(&example.pair),
                label: example.label,
                confidence: example.confidence,
            };
            added.push_str(&serde_json::to_string(&row).expect("added row serializes"));
            added.push('\n');
        }
        write_atomic(&added_path, added.as_bytes())?;
        let metrics = serde_json::to_string_pretty(&record.hs_metrics).expect("metrics serialize");
        write_atomic(&metrics_path, metrics.as_bytes())?;
    }

    let mut ts = String::new();
    for example in &run.final_ts {
        let row = TsRecord {
            pair: PairRecord::from(&example.pair),
            label: example.label,
            origin: example.origin,
        };
        ts.push_str(&serde_json::to_string(&row).expect("ts row serializes"));
        ts.push('\n');
    }
    write_atomic(&dir.join("final_ts.jsonl"), ts.as_bytes())
}

pub fn read_config(dir: &Path) -> Result<BootstrapConfig, CheckpointError> {
    let path = dir.join("config.json");
    let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&raw).map_err(|e| malformed(&path, e))
}

pub fn read_status(dir: &Path) -> Result<StatusRecord, CheckpointError> {
    let path = dir.join("status.json");
    let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&raw).map_err(|e| malformed(&path, e))
}

/// Reconstructs the per-sweep history from a checkpoint directory, ordered
/// by sweep index.
pub fn read_history(dir: &Path) -> Result<Vec<IterationRecord>, CheckpointError> {
    let sweeps_dir = dir.join("sweeps");
    let mut indices: Vec<usize> = Vec::new();
    let entries = fs::read_dir(&sweeps_dir).map_err(io_err(&sweeps_dir))?;
    for entry in entries {
        let entry = entry.map_err(io_err(&sweeps_dir))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(index) = name
            .strip_prefix("sweep-")
            .and_then(|rest| rest.strip_suffix(".added.jsonl"))
        {
            let index: usize = index
                .parse()
                .map_err(|_| malformed(&entry.path(), "unparseable sweep index"))?;
            indices.push(index);
        }
    }
    indices.sort_unstable();

    let mut history = Vec::with_capacity(indices.len());
    for sweep in indices {
        let (added_path, metrics_path) = sweep_paths(dir, sweep);
        let raw = fs::read_to_string(&added_path).map_err(io_err(&added_path))?;
        let mut added = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: AddedRecord = serde_json::from_str(line)
                .map_err(|e| malformed(&added_path, format!("line {}: {e}", lineno + 1)))?;
            added.push(PseudoExample {
                pair: row
                    .pair
                    .try_into()
                    .map_err(|e| malformed(&added_path, format!("line {}: {e}", lineno + 1)))?,
                label: row.label,
                confidence: row.confidence,
            });
        }
        let metrics_raw = fs::read_to_string(&metrics_path).map_err(io_err(&metrics_path))?;
        let hs_metrics: MetricsReport =
            serde_json::from_str(&metrics_raw).map_err(|e| malformed(&metrics_path, e))?;
        history.push(IterationRecord {
            sweep,
            added,
            hs_metrics,
        });
    }
    Ok(history)
}

pub fn read_final_ts(dir: &Path) -> Result<Vec<LabeledExample>, CheckpointError> {
    let path = dir.join("final_ts.jsonl");
    let raw = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut examples = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TsRecord = serde_json::from_str(line)
            .map_err(|e| malformed(&path, format!("line {}: {e}", lineno + 1)))?;
        examples.push(LabeledExample {
            pair: row
                .pair
                .try_into()
                .map_err(|e| malformed(&path, format!("line {}: {e}", lineno + 1)))?,
            label: row.label,
            origin: row.origin,
        });
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::reference::ReferenceClassifier;
    use crate::bootstrap::{bootstrap_run, DatasetSplits};
    use crate::harvest::{Definition, DefinitionPair};
    use chrono::{TimeZone, Utc};

    fn splits() -> DatasetSplits {
        let pair = |term: &str, a: &str, b: &str| DefinitionPair {
            term: term.into(),
            first: Definition {
                text: a.into(),
                timestamp: Utc.with_ymd_and_hms(2004, 1, 1, 0, 0, 0).unwrap(),
                revision_id: 1,
            },
            second: Definition {
                text: b.into(),
                timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
                revision_id: 2,
            },
        };
        let banks = ["orchid tulip daisy", "anvil hammer tongs", "comet nebula quasar"];
        let mut splits = DatasetSplits::default();
        for (label, bank) in banks.iter().enumerate() {
            for i in 0..12 {
                let le = LabeledExample {
                    pair: pair(&format!("t{label}{i}"), bank, &format!("{bank} {i}")),
                    label: Label::from_u8(label as u8).unwrap(),
                    origin: ExampleOrigin::Seed,
                };
                match i {
                    0..=6 => splits.ts.push(le),
                    7..=8 => splits.hs.push(le),
                    _ => splits.ds.push(le.pair),
                }
            }
        }
        // Pool needs at least 3k items for one sweep with k=1.
        splits
    }

    #[test]
    fn checkpoint_round_trips_and_is_byte_stable() {
        let cfg = BootstrapConfig {
            k: 1,
            max_sweeps: Some(2),
            ..BootstrapConfig::default()
        };
        let mut clf = ReferenceClassifier::new(9);
        let run = bootstrap_run(splits(), &mut clf, &cfg).unwrap();
        assert_eq!(run.history.len(), 2);

        let dir = tempfile::tempdir().unwrap();
        write_checkpoint(dir.path(), &cfg, &run).unwrap();

        assert_eq!(read_config(dir.path()).unwrap(), cfg);
        let status = read_status(dir.path()).unwrap();
        assert_eq!(status.outcome, BootstrapStatus::SweepCapReached);
        assert_eq!(status.sweeps, 2);

        let history = read_history(dir.path()).unwrap();
        assert_eq!(history.len(), run.history.len());
        for (disk, mem) in history.iter().zip(&run.history) {
            assert_eq!(disk.sweep, mem.sweep);
            assert_eq!(disk.hs_metrics, mem.hs_metrics);
            assert_eq!(disk.added.len(), mem.added.len());
            for (d, m) in disk.added.iter().zip(&mem.added) {
                assert_eq!(d.pair, m.pair);
                assert_eq!(d.label, m.label);
                assert_eq!(
                    d.confidence.to_bits(),
                    m.confidence.to_bits(),
                    "disk {} vs mem {}",
                    d.confidence,
                    m.confidence
                );
            }
        }

        let ts = read_final_ts(dir.path()).unwrap();
        assert_eq!(ts.len(), run.final_ts.len());
        assert!(ts.iter().any(|e| matches!(e.origin, ExampleOrigin::Pseudo { .. })));

        // Rewriting the same run produces identical bytes.
        let before = fs::read(dir.path().join("final_ts.jsonl")).unwrap();
        write_checkpoint(dir.path(), &cfg, &run).unwrap();
        let after = fs::read(dir.path().join("final_ts.jsonl")).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn malformed_and_missing_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_status(dir.path()),
            Err(CheckpointError::Io { .. })
        ));
        fs::create_dir_all(dir.path().join("sweeps")).unwrap();
        fs::write(dir.path().join("sweeps/sweep-0000.added.jsonl"), "not json\n").unwrap();
        fs::write(dir.path().join("sweeps/sweep-0000.metrics.json"), "{}").unwrap();
        assert!(matches!(
            read_history(dir.path()),
            Err(CheckpointError::Malformed { .. })
        ));
    }

    #[test]
    fn origin_rows_serialize_with_sweep_tags() {
        let pair = PairRecord {
            term: "x".into(),
            t1: "2004-01-01T00:00:00Z".into(),
            def1: "a".into(),
            t2: "2020-01-01T00:00:00Z".into(),
            def2: "b".into(),
            rev1: 1,
            rev2: 2,
        };
        let seed_row = serde_json::to_string(&TsRecord {
            pair: pair.clone(),
            label: Label::Same,
            origin: ExampleOrigin::Seed,
        })
        .unwrap();
        assert!(seed_row.contains("\"origin\":\"seed\""));
        let pseudo_row = serde_json::to_string(&TsRecord {
            pair,
            label: Label::Fundamental,
            origin: ExampleOrigin::Pseudo { sweep: 4 },
        })
        .unwrap();
        assert!(pseudo_row.contains("\"origin\":\"pseudo\""));
        assert!(pseudo_row.contains("\"sweep\":4"));
        let back: TsRecord = serde_json::from_str(&pseudo_row).unwrap();
        assert_eq!(back.origin, ExampleOrigin::Pseudo { sweep: 4 });
    }
}
