//! Binary target-sense verification over definition pairs: load the TSV
//! splits, swap each context sentence for a generated definition of the
//! target, classify the resulting pair with the 3-class model, and project
//! onto the binary task.

use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use thiserror::Error;

use crate::annotate::client::ClientError;
use crate::annotate::Label;
use crate::bootstrap::classifier::{Classifier, ClassifierError};
use crate::bootstrap::render_input;
use crate::harvest::{Definition, DefinitionPair};

/// One verification instance: a target word at a token position in a
/// context sentence, the candidate sense gloss, and the optional gold
/// answer (test gold is not always published).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WicTsvInstance {
    /// Zero-based line number in the examples file.
    pub id: usize,
    pub target: String,
    /// Whitespace-token position of the target inside `context`.
    pub target_index: usize,
    pub context: String,
    pub definition: String,
    pub gold: Option<bool>,
}

/// The binary verdict: true means the gloss matches the usage (same sense).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryOutcome {
    pub value: bool,
}

/// Accuracy plus F1 of the positive (true) class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryScore {
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Error)]
pub enum WictsvError {
    #[error("{path}:{line}: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("misaligned input files: {detail}")]
    MisalignedFiles { detail: String },
    #[error("instance {id} has no gold label")]
    MissingGold { id: usize },
    #[error("no instances to score")]
    Empty,
    #[error("definition generation failed on instance {id}")]
    Generation {
        id: usize,
        #[source]
        source: ClientError,
    },
    #[error("classifier failed")]
    Classifier(#[from] ClassifierError),
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn read_lines(path: &Path) -> Result<Vec<String>, WictsvError> {
    let raw = std::fs::read_to_string(path).map_err(|source| WictsvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(raw.lines().map(str::to_string).collect())
}

fn parse_gold(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "t" | "true" | "1" => Some(true),
        "f" | "false" | "0" => Some(false),
        _ => None,
    }
}

/// Loads instances from the published three-file layout: examples
/// (`target<TAB>index<TAB>context`), definitions (one gloss per line,
/// aligned), and optionally labels (`T`/`F` per line, aligned).
pub fn load_wictsv(
    examples_path: &Path,
    definitions_path: &Path,
    labels_path: Option<&Path>,
) -> Result<Vec<WicTsvInstance>, WictsvError> {
    let malformed = |path: &Path, line: usize, reason: String| WictsvError::MalformedRow {
        path: path.to_path_buf(),
        line: line + 1,
        reason,
    };

    let examples = read_lines(examples_path)?;
    let definitions = read_lines(definitions_path)?;
    if definitions.len() != examples.len() {
        return Err(WictsvError::MisalignedFiles {
            detail: format!(
                "{} examples but {} definitions",
                examples.len(),
                definitions.len()
            ),
        });
    }
    let labels = match labels_path {
        Some(path) => {
            let lines = read_lines(path)?;
            if lines.len() != examples.len() {
                return Err(WictsvError::MisalignedFiles {
                    detail: format!("{} examples but {} labels", examples.len(), lines.len()),
                });
            }
            let mut parsed = Vec::with_capacity(lines.len());
            for (i, line) in lines.iter().enumerate() {
                parsed.push(Some(parse_gold(line).ok_or_else(|| {
                    malformed(path, i, format!("unrecognized label {line:?}"))
                })?));
            }
            parsed
        }
        None => vec![None; examples.len()],
    };

    let mut instances = Vec::with_capacity(examples.len());
    for (i, row) in examples.iter().enumerate() {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 3 {
            return Err(malformed(
                examples_path,
                i,
                format!("expected 3 tab-separated columns, got {}", fields.len()),
            ));
        }
        let target_index: usize = fields[1].trim().parse().map_err(|_| {
            malformed(examples_path, i, format!("bad token index {:?}", fields[1]))
        })?;
        let context = fields[2].to_string();
        let token_count = context.split_whitespace().count();
        if target_index >= token_count {
            return Err(malformed(
                examples_path,
                i,
                format!("token index {target_index} outside context of {token_count} tokens"),
            ));
        }
        let definition = definitions[i].trim().to_string();
        if definition.is_empty() {
            return Err(malformed(definitions_path, i, "empty definition".into()));
        }
        instances.push(WicTsvInstance {
            id: i,
            target: fields[0].trim().to_string(),
            target_index,
            context,
            definition,
            gold: labels[i],
        });
    }
    Ok(instances)
}

/// Produces a definition of a target word as used in a context sentence.
/// Same client contract as annotation: scripted in tests, chat-backed live.
pub trait DefinitionGenerator {
    fn generate(&self, target: &str, context: &str) -> Result<String, ClientError>;
}

impl<F: Fn(&str, &str) -> Result<String, ClientError>> DefinitionGenerator for F {
    fn generate(&self, target: &str, context: &str) -> Result<String, ClientError> {
        self(target, context)
    }
}

/// Fallback generator with no model behind it: frames the usage itself as
/// the first definition, keeping the pipeline runnable offline.
pub struct ContextEchoGenerator;

impl DefinitionGenerator for ContextEchoGenerator {
    fn generate(&self, target: &str, context: &str) -> Result<String, ClientError> {
        Ok(format!("{target} as used in: {context}"))
    }
}

/// These instances are atemporal, so pairs get fixed synthetic timestamps
/// (epoch and epoch + 1s) that cannot be mistaken for revision data.
fn epoch(offset: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(offset, 0).single().expect("epoch constant")
}

/// Builds the classifier input pair: first the generated definition of the
/// target as used in context, second the instance's candidate gloss.
pub fn contextualize_as_pair(
    instance: &WicTsvInstance,
    defgen: &dyn DefinitionGenerator,
) -> Result<DefinitionPair, WictsvError> {
    let generated = defgen
        .generate(&instance.target, &instance.context)
        .map_err(|source| WictsvError::Generation {
            id: instance.id,
            source,
        })?;
    Ok(DefinitionPair {
        term: instance.target.clone(),
        first: Definition {
            text: generated,
            timestamp: epoch(0),
            revision_id: 0,
        },
        second: Definition {
            text: instance.definition.clone(),
            timestamp: epoch(1),
            revision_id: 1,
        },
    })
}

/// Projects the 3-class change label onto the binary task: only "same
/// information" (0) maps to a matching sense.
pub fn project_label(three_class: Label) -> BinaryOutcome {
    BinaryOutcome {
        value: three_class == Label::Same,
    }
}

/// Classifies every instance and projects to a binary verdict, in input
/// order. Gold labels are not required.
pub fn predict_wictsv(
    model: &dyn Classifier,
    instances: &[WicTsvInstance],
    defgen: &dyn DefinitionGenerator,
) -> Result<Vec<BinaryOutcome>, WictsvError> {
    let mut outcomes = Vec::with_capacity(instances.len());
    for instance in instances {
        let pair = contextualize_as_pair(instance, defgen)?;
        let probs = model.predict_proba(&render_input(&pair))?;
        let mut best = 0usize;
        for candidate in 1..3 {
            if probs[candidate] > probs[best] {
                best = candidate;
            }
        }
        outcomes.push(project_label(Label::from_u8(best as u8).expect("index in 0..3")));
    }
    Ok(outcomes)
}

/// Scores an existing prediction vector against gold: accuracy plus
/// positive-class F1. Callers that already hold predictions avoid the second
/// generator pass that [`evaluate_wictsv`] would make.
pub fn score_predictions(
    instances: &[WicTsvInstance],
    predicted: &[BinaryOutcome],
) -> Result<BinaryScore, WictsvError> {
    if instances.is_empty() {
        return Err(WictsvError::Empty);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    let mut correct = 0u64;
    for (instance, outcome) in instances.iter().zip(predicted) {
        let gold = instance
            .gold
            .ok_or(WictsvError::MissingGold { id: instance.id })?;
        if gold == outcome.value {
            correct += 1;
        }
        match (gold, outcome.value) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryScore {
        accuracy: ratio(correct, instances.len() as u64),
        f1,
    })
}

/// Accuracy and positive-class F1 of the model on gold-labeled instances.
pub fn evaluate_wictsv(
    model: &dyn Classifier,
    instances: &[WicTsvInstance],
    defgen: &dyn DefinitionGenerator,
) -> Result<BinaryScore, WictsvError> {
    if instances.is_empty() {
        return Err(WictsvError::Empty);
    }
    let predicted = predict_wictsv(model, instances, defgen)?;
    score_predictions(instances, &predicted)
}

/// The always-true baseline. With positive rate p this is accuracy = p and
/// F1 = 2p/(p+1).
pub fn all_true_baseline(instances: &[WicTsvInstance]) -> Result<BinaryScore, WictsvError> {
    let all_true = vec![BinaryOutcome { value: true }; instances.len()];
    score_predictions(instances, &all_true)
}
