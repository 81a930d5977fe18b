//! Multi-annotator consensus labeling of definition pairs.
//!
//! Three primary annotators vote on each pair; a fourth acts as referee. A
//! fundamental-change label is only assigned on unanimous agreement, vote
//! splits between the other labels fall to the majority, and three-way splits
//! go to the referee.

pub mod client;
pub mod kappa;
pub mod parse;
pub mod pool;
pub mod prompt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use client::ClientError;

/// The three-way classification of a definition pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// 0: both definitions convey the same information.
    Same,
    /// 1: the definitions differ in wording or style only.
    NonFundamental,
    /// 2: something fundamental changed between the two definitions.
    Fundamental,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Same, Label::NonFundamental, Label::Fundamental];

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Same => 0,
            Label::NonFundamental => 1,
            Label::Fundamental => 2,
        }
    }

    pub fn as_index(self) -> usize {
        self.as_u8() as usize
    }

    pub fn from_u8(value: u8) -> Option<Label> {
        match value {
            0 => Some(Label::Same),
            1 => Some(Label::NonFundamental),
            2 => Some(Label::Fundamental),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = u8::deserialize(deserializer)?;
        Label::from_u8(raw).ok_or_else(|| D::Error::custom(format!("label {raw} outside 0..=2")))
    }
}

/// One annotator's answer for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorVote {
    pub label: Label,
    /// Self-reported confidence, 0..=10.
    pub confidence: u8,
    pub explanation: String,
}

impl AnnotatorVote {
    pub fn new(
        label: Label,
        confidence: u8,
        explanation: impl Into<String>,
    ) -> Result<Self, AnnotateError> {
        if confidence > 10 {
            return Err(AnnotateError::InvalidConfidence {
                value: confidence as i64,
            });
        }
        Ok(AnnotatorVote {
            label,
            confidence,
            explanation: explanation.into(),
        })
    }

    /// Canonical response block. [`parse::parse_vote`] round-trips it.
    pub fn render(&self) -> String {
        format!(
            "{{{{ 'label': {}, 'confidence': {}, 'explanation': '{}' }}}}",
            self.label.as_u8(),
            self.confidence,
            self.explanation
        )
    }
}

/// Outcome of consensus over one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsensusLabel {
    Assigned(Label),
    Discarded,
}

/// Which rule produced the consensus outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusRule {
    /// Every vote, referee included, was for a fundamental change.
    Unanimous2,
    /// A strict majority of the primaries agreed on label 0 or 1.
    Majority,
    /// A three-way primary split was settled by the referee.
    Referee,
    /// A fundamental-change majority short of full unanimity was demoted.
    Demoted2,
    /// A three-way split the referee called fundamental; no label assigned.
    Discarded,
}

impl ConsensusRule {
    pub fn as_str(self) -> &'static str {
        match self {
            ConsensusRule::Unanimous2 => "unanimous_2",
            ConsensusRule::Majority => "majority",
            ConsensusRule::Referee => "referee",
            ConsensusRule::Demoted2 => "demoted_2",
            ConsensusRule::Discarded => "discarded",
        }
    }
}

/// The consensus decision together with every vote that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusResult {
    pub label: ConsensusLabel,
    pub primary_votes: [AnnotatorVote; 3],
    /// Recorded whenever the referee was consulted.
    pub referee_vote: Option<AnnotatorVote>,
    pub rule_applied: ConsensusRule,
}

/// Sampling and head-count settings shared by every annotator call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatorSettings {
    pub temperature: f64,
    pub top_p: f64,
    pub num_primary: usize,
    pub num_total: usize,
    /// When true (the default), a unanimous fundamental-change vote by the
    /// primaries must also be confirmed by the referee.
    pub referee_confirms_unanimity: bool,
    /// Transport-level retries per annotator call.
    pub max_retries: u32,
}

impl Default for AnnotatorSettings {
    fn default() -> Self {
        AnnotatorSettings {
            temperature: 0.0,
            top_p: 1.0,
            num_primary: 3,
            num_total: 4,
            referee_confirms_unanimity: true,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("prompt variant {variant_id} is missing required slot {slot}")]
    MissingSlot { variant_id: u8, slot: String },
    #[error("malformed prompt variant: {reason}")]
    MalformedVariant { reason: String },
    #[error("unparseable vote ({reason}); raw response starts {snippet:?}")]
    UnparseableVote { reason: String, snippet: String },
    #[error("vote label {value} outside 0..=2")]
    LabelOutOfRange { value: i64 },
    #[error("vote confidence {value} outside 0..=10")]
    InvalidConfidence { value: i64 },
    #[error("invalid annotator settings: {reason}")]
    InvalidSettings { reason: String },
    #[error("annotator client failed on pair {fingerprint}")]
    Client {
        fingerprint: String,
        #[source]
        source: ClientError,
    },
}

/// Whether [`resolve_consensus`] will consult the referee for these primary
/// labels under the given settings.
pub fn referee_required(settings: &AnnotatorSettings, primary_labels: [Label; 3]) -> bool {
    let fundamental = primary_labels
        .iter()
        .filter(|&&l| l == Label::Fundamental)
        .count();
    if fundamental == 3 {
        return settings.referee_confirms_unanimity;
    }
    let distinct = {
        let mut ls = primary_labels.to_vec();
        ls.sort();
        ls.dedup();
        ls.len()
    };
    distinct == 3
}

/// Applies the consensus rules with default settings. The referee supplier
/// is only invoked when the rules require a fourth opinion.
pub fn resolve_consensus(
    primary_votes: [AnnotatorVote; 3],
    referee: impl FnOnce() -> AnnotatorVote,
) -> ConsensusResult {
    resolve_consensus_with(&AnnotatorSettings::default(), primary_votes, referee)
}

/// Applies the consensus rules:
///
/// * all primaries vote 2 and the referee confirms: label 2, `unanimous_2`;
/// * all primaries vote 2 but the referee dissents: label 1, `demoted_2`;
/// * exactly two primaries vote 2: label 1, `demoted_2`, no referee;
/// * a strict majority on 0 or 1: that label, `majority`;
/// * three distinct labels: the referee's 0 or 1 wins (`referee`), and a
///   referee vote of 2 discards the pair.
///
/// Label 2 can only be assigned when every recorded vote is 2.
pub fn resolve_consensus_with(
    settings: &AnnotatorSettings,
    primary_votes: [AnnotatorVote; 3],
    referee: impl FnOnce() -> AnnotatorVote,
) -> ConsensusResult {
    let count = |l: Label| {
        primary_votes
            .iter()
            .filter(|v| v.label == l)
            .count()
    };

    if count(Label::Fundamental) == 3 {
        if !settings.referee_confirms_unanimity {
            return ConsensusResult {
                label: ConsensusLabel::Assigned(Label::Fundamental),
                primary_votes,
                referee_vote: None,
                rule_applied: ConsensusRule::Unanimous2,
            };
        }
        let referee_vote = referee();
        return if referee_vote.label == Label::Fundamental {
            ConsensusResult {
                label: ConsensusLabel::Assigned(Label::Fundamental),
                primary_votes,
                referee_vote: Some(referee_vote),
                rule_applied: ConsensusRule::Unanimous2,
            }
        } else {
            ConsensusResult {
                label: ConsensusLabel::Assigned(Label::NonFundamental),
                primary_votes,
                referee_vote: Some(referee_vote),
                rule_applied: ConsensusRule::Demoted2,
            }
        };
    }

    if count(Label::Fundamental) == 2 {
        return ConsensusResult {
            label: ConsensusLabel::Assigned(Label::NonFundamental),
            primary_votes,
            referee_vote: None,
            rule_applied: ConsensusRule::Demoted2,
        };
    }

    for l in [Label::Same, Label::NonFundamental] {
        if count(l) >= 2 {
            return ConsensusResult {
                label: ConsensusLabel::Assigned(l),
                primary_votes,
                referee_vote: None,
                rule_applied: ConsensusRule::Majority,
            };
        }
    }

    let referee_vote = referee();
    match referee_vote.label {
        Label::Fundamental => ConsensusResult {
            label: ConsensusLabel::Discarded,
            primary_votes,
            referee_vote: Some(referee_vote),
            rule_applied: ConsensusRule::Discarded,
        },
        l => ConsensusResult {
            label: ConsensusLabel::Assigned(l),
            primary_votes,
            referee_vote: Some(referee_vote),
            rule_applied: ConsensusRule::Referee,
        },
    }
}
