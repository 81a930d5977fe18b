//! Batch annotation: prompts every variant, parses the votes, and applies
//! the consensus rules to each pair.

use serde::{Deserialize, Serialize};

use super::client::{AnnotatorClient, ClientError};
use super::parse::parse_vote;
use super::prompt::{build_prompt, PromptVariant};
use super::{
    resolve_consensus_with, AnnotateError, AnnotatorSettings, AnnotatorVote, ConsensusLabel,
    ConsensusResult, Label,
};
use crate::harvest::{DefinitionPair, HarvestError, PairRecord};
use crate::textutil::backoff_delay;

/// A pair that received a consensus label.
#[derive(Debug, Clone)]
pub struct AnnotatedPair {
    pub pair: DefinitionPair,
    pub consensus: ConsensusResult,
}

/// A pair dropped during annotation, with the reason.
#[derive(Debug, Clone)]
pub struct DiscardedPair {
    pub pair: DefinitionPair,
    pub reason: String,
}

/// Everything produced by [`annotate_pool`].
#[derive(Debug, Default)]
pub struct PoolOutcome {
    pub labeled: Vec<AnnotatedPair>,
    pub discarded: Vec<DiscardedPair>,
    /// One row per fully voted pair (consensus-discarded pairs included),
    /// counting votes per label across all annotators.
    pub vote_matrix: Vec<Vec<u64>>,
}

fn complete_with_retries(
    client: &dyn AnnotatorClient,
    settings: &AnnotatorSettings,
    prompt: &str,
    fingerprint: &str,
) -> Result<String, AnnotateError> {
    let mut attempt = 0;
    loop {
        match client.complete(settings, prompt) {
            Ok(raw) => return Ok(raw),
            Err(ClientError::Transport { .. }) if attempt < settings.max_retries => {
                std::thread::sleep(backoff_delay(attempt));
                attempt += 1;
            }
            Err(source) => {
                return Err(AnnotateError::Client {
                    fingerprint: fingerprint.to_string(),
                    source,
                })
            }
        }
    }
}

/// Annotates every pair with every variant and resolves consensus.
///
/// The first `num_primary` variants are the primary annotators and the next
/// one is the referee. All votes are collected up front so that agreement
/// statistics cover a uniform rater count, while consensus still consults
/// the referee only where the rules call for one. Pairs with an unparseable
/// vote are discarded with a reason; transport failures abort after retries.
pub fn annotate_pool(
    pairs: &[DefinitionPair],
    client: &dyn AnnotatorClient,
    settings: &AnnotatorSettings,
    variants: &[PromptVariant],
) -> Result<PoolOutcome, AnnotateError> {
    if settings.num_primary != 3 {
        return Err(AnnotateError::InvalidSettings {
            reason: format!(
                "consensus rules are defined for 3 primary annotators, got {}",
                settings.num_primary
            ),
        });
    }
    if settings.num_total != settings.num_primary + 1 {
        return Err(AnnotateError::InvalidSettings {
            reason: format!(
                "num_total must be num_primary + 1 (one referee), got {}",
                settings.num_total
            ),
        });
    }
    if variants.len() < settings.num_total {
        return Err(AnnotateError::InvalidSettings {
            reason: format!(
                "{} prompt variants supplied, {} annotators configured",
                variants.len(),
                settings.num_total
            ),
        });
    }
    for variant in &variants[..settings.num_total] {
        variant.validate()?;
    }

    let mut outcome = PoolOutcome::default();
    'pairs: for pair in pairs {
        let fingerprint = pair.fingerprint();
        let mut votes: Vec<AnnotatorVote> = Vec::with_capacity(settings.num_total);
        for variant in &variants[..settings.num_total] {
            let prompt = build_prompt(variant, pair)?;
            let raw = complete_with_retries(client, settings, &prompt, &fingerprint)?;
            match parse_vote(&raw) {
                Ok(vote) => votes.push(vote),
                Err(err) => {
                    outcome.discarded.push(DiscardedPair {
                        pair: pair.clone(),
                        reason: format!("variant {}: {err}", variant.variant_id),
                    });
                    continue 'pairs;
                }
            }
        }

        let mut row = vec![0u64; Label::ALL.len()];
        for vote in &votes {
            row[vote.label.as_index()] += 1;
        }
        outcome.vote_matrix.push(row);

        let referee_vote = votes.pop().expect("num_total votes collected");
        let primary: [AnnotatorVote; 3] = votes.try_into().expect("three primary votes");
        let consensus = resolve_consensus_with(settings, primary, || referee_vote);
        match consensus.label {
            ConsensusLabel::Assigned(_) => outcome.labeled.push(AnnotatedPair {
                pair: pair.clone(),
                consensus,
            }),
            ConsensusLabel::Discarded => outcome.discarded.push(DiscardedPair {
                pair: pair.clone(),
                reason: "three-way split and the referee voted for a fundamental change".into(),
            }),
        }
    }
    Ok(outcome)
}

/// One vote in the labeled JSONL output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub label: Label,
    pub confidence: u8,
}

impl From<&AnnotatorVote> for VoteRecord {
    fn from(vote: &AnnotatorVote) -> Self {
        VoteRecord {
            label: vote.label,
            confidence: vote.confidence,
        }
    }
}

/// Flat JSONL row for a labeled pair. Field order is part of the format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub term: String,
    pub t1: String,
    pub def1: String,
    pub t2: String,
    pub def2: String,
    pub label: Label,
    pub rule: String,
    pub votes: Vec<VoteRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub referee: Option<VoteRecord>,
}

impl LabeledRecord {
    pub fn from_annotated(annotated: &AnnotatedPair) -> Self {
        let ConsensusLabel::Assigned(label) = annotated.consensus.label else {
            unreachable!("labeled output only contains assigned pairs");
        };
        let pair = PairRecord::from(&annotated.pair);
        LabeledRecord {
            term: pair.term,
            t1: pair.t1,
            def1: pair.def1,
            t2: pair.t2,
            def2: pair.def2,
            label,
            rule: annotated.consensus.rule_applied.as_str().to_string(),
            votes: annotated.consensus.primary_votes.iter().map(VoteRecord::from).collect(),
            referee: annotated.consensus.referee_vote.as_ref().map(VoteRecord::from),
        }
    }

    pub fn into_labeled_pair(self) -> Result<(DefinitionPair, Label), HarvestError> {
        let record = PairRecord {
            term: self.term,
            t1: self.t1,
            def1: self.def1,
            t2: self.t2,
            def2: self.def2,
            rev1: 0,
            rev2: 0,
        };
        Ok((DefinitionPair::try_from(record)?, self.label))
    }
}

/// Serializes labeled pairs as JSONL.
pub fn labeled_to_jsonl(labeled: &[AnnotatedPair]) -> String {
    let mut out = String::new();
    for annotated in labeled {
        let record = LabeledRecord::from_annotated(annotated);
        out.push_str(&serde_json::to_string(&record).expect("labeled record serializes"));
        out.push('\n');
    }
    out
}

/// Parses labeled JSONL rows.
pub fn labeled_from_jsonl(text: &str) -> Result<Vec<LabeledRecord>, AnnotateError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: LabeledRecord =
            serde_json::from_str(line).map_err(|e| AnnotateError::MalformedVariant {
                reason: format!("bad labeled record on line {}: {e}", idx + 1),
            })?;
        records.push(record);
    }
    Ok(records)
}
