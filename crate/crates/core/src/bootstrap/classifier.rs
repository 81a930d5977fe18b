//! The classifier boundary the sweep loop drives: a trait, a name-based
//! registry, and a subprocess adapter so heavyweight model stacks can plug
//! in without linking into this crate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reference::ReferenceClassifier;
use crate::annotate::Label;

/// One rendered training row. The fingerprint travels with the text so
/// wrappers can track example identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingExample {
    pub fingerprint: String,
    pub input: String,
    pub label: Label,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("predict called before fit")]
    NotFitted,
    #[error("cannot fit on an empty training set")]
    EmptyTrainingSet,
    #[error("no classifier registered under {name:?}")]
    UnknownClassifier { name: String },
    #[error("external classifier failed: {message}")]
    External { message: String },
    #[error("classifier produced invalid probabilities: {detail}")]
    InvalidProbabilities { detail: String },
    #[error("classifier io")]
    Io(#[from] std::io::Error),
}

/// Three-class probabilistic classifier over rendered pair text.
///
/// `fit` trains from scratch (implementations offering warm starts opt in
/// explicitly); probabilities are non-negative and sum to 1 within 1e-9;
/// prediction after a fit is deterministic for a fixed construction seed.
pub trait Classifier {
    fn fit(&mut self, examples: &[TrainingExample]) -> Result<(), ClassifierError>;

    fn predict_proba(&self, input: &str) -> Result<[f64; 3], ClassifierError>;

    /// Batch prediction; adapters that cross a process boundary override
    /// this to amortize the round trip.
    fn predict_proba_batch(&self, inputs: &[String]) -> Result<Vec<[f64; 3]>, ClassifierError> {
        inputs.iter().map(|input| self.predict_proba(input)).collect()
    }
}

pub type ClassifierFactory =
    Box<dyn Fn(u64) -> Result<Box<dyn Classifier>, ClassifierError> + Send + Sync>;

/// Name-to-factory map. Names with an `external:` prefix bypass the map and
/// spawn the named command via [`ExternalCommandClassifier`].
#[derive(Default)]
pub struct ClassifierRegistry {
    factories: BTreeMap<String, ClassifierFactory>,
}

impl ClassifierRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, factory: ClassifierFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, seed: u64) -> Result<Box<dyn Classifier>, ClassifierError> {
        if let Some(factory) = self.factories.get(name) {
            return factory(seed);
        }
        if let Some(command) = name.strip_prefix("external:") {
            return Ok(Box::new(ExternalCommandClassifier::from_command_line(command)?));
        }
        Err(ClassifierError::UnknownClassifier {
            name: name.to_string(),
        })
    }
}

/// Registry with the built-in classifiers: `reference` (fresh weights each
/// fit) and `reference-warm` (weights carried across fits).
pub fn default_registry() -> ClassifierRegistry {
    let mut registry = ClassifierRegistry::new();
    registry.register(
        "reference",
        Box::new(|seed| Ok(Box::new(ReferenceClassifier::new(seed)) as Box<dyn Classifier>)),
    );
    registry.register(
        "reference-warm",
        Box::new(|seed| {
            Ok(Box::new(ReferenceClassifier::new(seed).with_warm_start(true))
                as Box<dyn Classifier>)
        }),
    );
    registry
}

/// Runs an external program once per prediction batch. The program is
/// invoked with two extra trailing arguments, the train JSONL path and the
/// predict JSONL path, and must print one `p0,p1,p2` CSV line per predict
/// row on stdout.
pub struct ExternalCommandClassifier {
    program: String,
    args: Vec<String>,
    workdir: tempfile::TempDir,
    train_path: Option<PathBuf>,
    round: usize,
}

impl ExternalCommandClassifier {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Result<Self, ClassifierError> {
        Ok(ExternalCommandClassifier {
            program: program.into(),
            args,
            workdir: tempfile::tempdir()?,
            train_path: None,
            round: 0,
        })
    }

    /// Splits a command line on whitespace (no quoting; paths with spaces
    /// need the explicit constructor).
    pub fn from_command_line(command: &str) -> Result<Self, ClassifierError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| ClassifierError::External {
            message: "empty external command".into(),
        })?;
        Self::new(program, parts.map(str::to_string).collect())
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, ClassifierError> {
        let path = self.workdir.path().join(name);
        let mut file = std::fs::File::create(&path)?;
        for row in rows {
            serde_json::to_writer(&mut file, row).map_err(|e| ClassifierError::External {
                message: format!("serializing {name}: {e}"),
            })?;
            file.write_all(b"\n")?;
        }
        Ok(path)
    }
}

#[derive(Serialize)]
struct PredictRow<'a> {
    input: &'a str,
}

impl Classifier for ExternalCommandClassifier {
    fn fit(&mut self, examples: &[TrainingExample]) -> Result<(), ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        self.round += 1;
        let name = format!("train-{:04}.jsonl", self.round);
        self.train_path = Some(self.write_jsonl(&name, examples)?);
        Ok(())
    }

    fn predict_proba(&self, input: &str) -> Result<[f64; 3], ClassifierError> {
        Ok(self.predict_proba_batch(std::slice::from_ref(&input.to_string()))?[0])
    }

    fn predict_proba_batch(&self, inputs: &[String]) -> Result<Vec<[f64; 3]>, ClassifierError> {
        let train_path = self.train_path.as_ref().ok_or(ClassifierError::NotFitted)?;
        let rows: Vec<PredictRow> = inputs.iter().map(|i| PredictRow { input: i }).collect();
        let predict_path = self.write_jsonl(&format!("predict-{:04}.jsonl", self.round), &rows)?;

        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(train_path)
            .arg(&predict_path)
            .output()
            .map_err(|e| ClassifierError::External {
                message: format!("spawning {}: {e}", self.program),
            })?;
        if !output.status.success() {
            return Err(ClassifierError::External {
                message: format!(
                    "{} exited with {}: {}",
                    self.program,
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }

        let stdout = String::from_utf8_lossy(&output.stdout);
        let mut probs = Vec::with_capacity(inputs.len());
        for line in stdout.lines().filter(|l| !l.trim().is_empty()) {
            probs.push(parse_probability_csv(line)?);
        }
        if probs.len() != inputs.len() {
            return Err(ClassifierError::External {
                message: format!("expected {} probability rows, got {}", inputs.len(), probs.len()),
            });
        }
        Ok(probs)
    }
}

/// Parses one `p0,p1,p2` line. Text round-tripping loses a little
/// precision, so sums within 1e-6 of 1 are accepted and renormalized.
fn parse_probability_csv(line: &str) -> Result<[f64; 3], ClassifierError> {
    let invalid = |detail: String| ClassifierError::InvalidProbabilities { detail };
    let fields: Vec<&str> = line.trim().split(',').collect();
    if fields.len() != 3 {
        return Err(invalid(format!("expected 3 comma-separated values, got {line:?}")));
    }
    let mut probs = [0.0f64; 3];
    for (slot, field) in probs.iter_mut().zip(&fields) {
        let value: f64 = field
            .trim()
            .parse()
            .map_err(|e| invalid(format!("bad probability {field:?}: {e}")))?;
        if !value.is_finite() || value < 0.0 {
            return Err(invalid(format!("probability {value} out of range")));
        }
        *slot = value;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("probabilities sum to {sum}")));
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(probs)
}
