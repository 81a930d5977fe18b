//! Iterative self-training: per sweep, retrain on the labeled set, score
//! the whole unlabeled pool, promote the most confident predictions per
//! label, and evaluate on held-out data that is never trained on.

pub mod checkpoint;
pub mod classifier;
pub mod reference;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::Label;
use crate::eval::{compute_metrics, MetricsReport};
use crate::harvest::DefinitionPair;
use crate::textutil::format_ts;
use classifier::{Classifier, TrainingExample};

/// Byte-format tag stamped on checkpoints so datasets rendered under a
/// different convention are never silently mixed.
pub const RENDER_FORMAT_V1: &str = "t-y-v1";

/// Where a training example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "origin")]
pub enum ExampleOrigin {
    /// Consensus-annotated seed data.
    Seed,
    /// Promoted from the pool by the classifier at the given sweep.
    Pseudo { sweep: usize },
}

/// A labeled pair plus its provenance.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub pair: DefinitionPair,
    pub label: Label,
    pub origin: ExampleOrigin,
}

/// The three working sets: labeled training data (TS), the unlabeled pool
/// (DS), and the held-out evaluation set (HS).
#[derive(Debug, Clone, Default)]
pub struct DatasetSplits {
    pub ts: Vec<LabeledExample>,
    pub ds: Vec<DefinitionPair>,
    pub hs: Vec<LabeledExample>,
}

impl DatasetSplits {
    /// Pairwise fingerprint disjointness across the three sets.
    pub fn validate(&self) -> Result<(), BootstrapError> {
        let mut seen = BTreeSet::new();
        let fingerprints = self
            .ts
            .iter()
            .map(|e| e.pair.fingerprint())
            .chain(self.ds.iter().map(|p| p.fingerprint()))
            .chain(self.hs.iter().map(|e| e.pair.fingerprint()));
        for fingerprint in fingerprints {
            if !seen.insert(fingerprint.clone()) {
                return Err(BootstrapError::OverlappingSplits { fingerprint });
            }
        }
        Ok(())
    }
}

/// Knobs of the sweep loop. `k` is the per-label promotion budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub k: usize,
    pub max_sweeps: Option<usize>,
    pub rng_seed: u64,
    pub render_format: String,
    /// Study flag: drop every pool item sharing the promoted label instead
    /// of only the promoted top k. Drains the pool almost immediately; off
    /// by default.
    pub drain_predicted_label: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            k: 10,
            max_sweeps: None,
            rng_seed: 0,
            render_format: RENDER_FORMAT_V1.to_string(),
            drain_predicted_label: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.k == 0 {
            return Err(BootstrapError::InvalidConfig {
                reason: "per-label budget k must be at least 1".into(),
            });
        }
        if self.render_format != RENDER_FORMAT_V1 {
            return Err(BootstrapError::InvalidConfig {
                reason: format!(
                    "unknown render format {:?} (this build supports {RENDER_FORMAT_V1:?})",
                    self.render_format
                ),
            });
        }
        Ok(())
    }
}

/// A pool item promoted into the training set.
#[derive(Debug, Clone)]
pub struct PseudoExample {
    pub pair: DefinitionPair,
    pub label: Label,
    pub confidence: f64,
}

/// What one sweep did: which pool items were promoted per label and how the
/// retrained model scored on held-out data.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub sweep: usize,
    pub added: Vec<PseudoExample>,
    pub hs_metrics: MetricsReport,
}

impl IterationRecord {
    pub fn added_for(&self, label: Label) -> impl Iterator<Item = &PseudoExample> {
        self.added.iter().filter(move |e| e.label == label)
    }
}

/// Why the sweep loop stopped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum BootstrapStatus {
    /// The pool dropped below one full per-label budget (k per label).
    PoolExhausted,
    /// The configured sweep cap was reached.
    SweepCapReached,
    /// A sweep promoted nothing for any label.
    Stalled,
    /// The classifier failed; history up to that sweep is preserved.
    ClassifierFailed { sweep: usize, message: String },
}

/// Full result of a run: per-sweep records, the final training set, and the
/// stop reason.
#[derive(Debug)]
pub struct BootstrapRun {
    pub history: Vec<IterationRecord>,
    pub final_ts: Vec<LabeledExample>,
    pub status: BootstrapStatus,
}

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("need {requested} labeled pairs but only {available} are available")]
    InsufficientLabeled { available: usize, requested: usize },
    #[error("splits overlap on pair fingerprint {fingerprint}")]
    OverlappingSplits { fingerprint: String },
    #[error("invalid bootstrap configuration: {reason}")]
    InvalidConfig { reason: String },
}

/// Renders a pair as classifier input. The exact bytes are versioned
/// ([`RENDER_FORMAT_V1`]): angle-bracket tokens isolate the term and each
/// timespan, single spaces throughout.
pub fn render_input(pair: &DefinitionPair) -> String {
    format!(
        "<t> {} </t> <y> {} </y> {} <y> {} </y> {}",
        pair.term,
        format_ts(&pair.first.timestamp),
        pair.first.text,
        format_ts(&pair.second.timestamp),
        pair.second.text,
    )
}

/// Shuffles the labeled pairs with the caller's RNG and partitions them
/// into TS and HS of the requested sizes; the pool becomes DS after
/// dropping anything colliding with a labeled fingerprint or duplicated
/// within the pool itself.
pub fn split_dataset(
    labeled: &[(DefinitionPair, Label)],
    pool: &[DefinitionPair],
    sizes: (usize, usize),
    rng: &mut dyn RngCore,
) -> Result<DatasetSplits, BootstrapError> {
    let (ts_size, hs_size) = sizes;
    if labeled.len() < ts_size + hs_size {
        return Err(BootstrapError::InsufficientLabeled {
            available: labeled.len(),
            requested: ts_size + hs_size,
        });
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.shuffle(rng);

    let example = |i: usize| {
        let (pair, label) = &labeled[i];
        LabeledExample {
            pair: pair.clone(),
            label: *label,
            origin: ExampleOrigin::Seed,
        }
    };
    let ts: Vec<LabeledExample> = order[..ts_size].iter().map(|&i| example(i)).collect();
    let hs: Vec<LabeledExample> = order[ts_size..ts_size + hs_size]
        .iter()
        .map(|&i| example(i))
        .collect();

    let mut taken: BTreeSet<String> = ts
        .iter()
        .chain(&hs)
        .map(|e| e.pair.fingerprint())
        .collect();
    let ds: Vec<DefinitionPair> = pool
        .iter()
        .filter(|p| taken.insert(p.fingerprint()))
        .cloned()
        .collect();

    let splits = DatasetSplits { ts, ds, hs };
    splits.validate()?;
    Ok(splits)
}

/// One scored pool item: its position in the pool, the argmax label, and
/// that label's probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolPrediction {
    pub index: usize,
    pub label: Label,
    pub confidence: f64,
}

/// The at-most-k most confident predictions carrying `label`, ties broken
/// by pool order.
pub fn select_top_k(
    predictions: &[PoolPrediction],
    label: Label,
    k: usize,
) -> Vec<PoolPrediction> {
    let mut matching: Vec<PoolPrediction> = predictions
        .iter()
        .filter(|p| p.label == label)
        .copied()
        .collect();
    // Stable sort keeps pool order among equal confidences.
    matching.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    matching.truncate(k);
    matching
}

fn training_rows(ts: &[LabeledExample]) -> Vec<TrainingExample> {
    ts.iter()
        .map(|e| TrainingExample {
            fingerprint: e.pair.fingerprint(),
            input: render_input(&e.pair),
            label: e.label,
        })
        .collect()
}

fn argmax_label(probs: &[f64; 3]) -> Option<(Label, f64)> {
    let mut best = 0usize;
    for candidate in 1..3 {
        if probs[candidate] > probs[best] {
            best = candidate;
        }
    }
    if probs.iter().any(|p| !p.is_finite()) {
        return None;
    }
    Some((Label::from_u8(best as u8).expect("index in 0..3"), probs[best]))
}

/// Runs the sweep loop until the pool guard fails, the sweep cap is hit,
/// a sweep adds nothing, or the classifier errors (partial history is kept
/// in every case).
///
/// Each sweep: retrain on the current TS, score all of DS, move the top-k
/// most confident predictions per label from DS into TS tagged with the
/// sweep, then evaluate on HS. The loop runs while |DS| covers a full
/// per-label budget (k per label) and the sweep count is under the cap.
pub fn bootstrap_run(
    splits: DatasetSplits,
    clf: &mut dyn Classifier,
    cfg: &BootstrapConfig,
) -> Result<BootstrapRun, BootstrapError> {
    cfg.validate()?;
    splits.validate()?;
    if splits.hs.is_empty() {
        return Err(BootstrapError::InvalidConfig {
            reason: "held-out set is empty; per-sweep evaluation is impossible".into(),
        });
    }
    let DatasetSplits { mut ts, mut ds, hs } = splits;
    let hs_gold: Vec<Label> = hs.iter().map(|e| e.label).collect();
    let hs_inputs: Vec<String> = hs.iter().map(|e| render_input(&e.pair)).collect();

    let mut history: Vec<IterationRecord> = Vec::new();
    let mut sweep = 0usize;
    let status = loop {
        if ds.len() < cfg.k * Label::ALL.len() {
            break BootstrapStatus::PoolExhausted;
        }
        if cfg.max_sweeps.is_some_and(|cap| sweep >= cap) {
            break BootstrapStatus::SweepCapReached;
        }

        let failed = |message: String| BootstrapStatus::ClassifierFailed { sweep, message };
        if let Err(e) = clf.fit(&training_rows(&ts)) {
            break failed(e.to_string());
        }

        let pool_inputs: Vec<String> = ds.iter().map(render_input).collect();
        let probs = match clf.predict_proba_batch(&pool_inputs) {
            Ok(probs) => probs,
            Err(e) => break failed(e.to_string()),
        };
        if probs.len() != ds.len() {
            break failed(format!(
                "classifier returned {} rows for {} pool items",
                probs.len(),
                ds.len()
            ));
        }
        let mut predictions = Vec::with_capacity(ds.len());
        let mut bad_probability = None;
        for (index, p) in probs.iter().enumerate() {
            let sum: f64 = p.iter().sum();
            match argmax_label(p) {
                Some((label, confidence))
                    if (sum - 1.0).abs() <= 1e-6 && p.iter().all(|&v| v >= 0.0) =>
                {
                    predictions.push(PoolPrediction {
                        index,
                        label,
                        confidence,
                    })
                }
                _ => {
                    bad_probability = Some(format!("pool item {index} scored {p:?}"));
                    break;
                }
            }
        }
        if let Some(detail) = bad_probability {
            break failed(detail);
        }

        let mut chosen: Vec<PoolPrediction> = Vec::new();
        let mut removal: BTreeSet<usize> = BTreeSet::new();
        for label in Label::ALL {
            let top = select_top_k(&predictions, label, cfg.k);
            removal.extend(top.iter().map(|p| p.index));
            if cfg.drain_predicted_label {
                removal.extend(
                    predictions
                        .iter()
                        .filter(|p| p.label == label)
                        .map(|p| p.index),
                );
            }
            chosen.extend(top);
        }

        let added: Vec<PseudoExample> = chosen
            .iter()
            .map(|p| PseudoExample {
                pair: ds[p.index].clone(),
                label: p.label,
                confidence: p.confidence,
            })
            .collect();
        ts.extend(added.iter().map(|a| LabeledExample {
            pair: a.pair.clone(),
            label: a.label,
            origin: ExampleOrigin::Pseudo { sweep },
        }));
        let mut index = 0usize;
        ds.retain(|_| {
            let keep = !removal.contains(&index);
            index += 1;
            keep
        });

        let hs_probs = match clf.predict_proba_batch(&hs_inputs) {
            Ok(probs) => probs,
            Err(e) => break failed(e.to_string()),
        };
        let hs_predicted: Vec<Label> = match hs_probs
            .iter()
            .map(|p| argmax_label(p).map(|(l, _)| l))
            .collect::<Option<Vec<Label>>>()
        {
            Some(labels) => labels,
            None => break failed("non-finite probability on held-out data".into()),
        };
        let hs_metrics = compute_metrics(&hs_gold, &hs_predicted)
            .expect("held-out set verified non-empty and lengths match");

        let stalled = added.is_empty();
        history.push(IterationRecord {
            sweep,
            added,
            hs_metrics,
        });
        if stalled {
            break BootstrapStatus::Stalled;
        }
        sweep += 1;
    };

    Ok(BootstrapRun {
        history,
        final_ts: ts,
        status,
    })
}
