//! Prompt variants and prompt construction.
//!
//! A variant is an instruction template plus few-shot examples, stored as an
//! editable text file: the instruction first, then alternating blocks fenced
//! by `=== input ===` and `=== output ===` marker lines.

use super::AnnotateError;
use crate::harvest::DefinitionPair;
use crate::textutil::format_ts;

/// Slots every instruction template must contain.
pub const REQUIRED_SLOTS: [&str; 5] = ["{term}", "{timespan1}", "{def1}", "{timespan2}", "{def2}"];

const INPUT_MARKER: &str = "=== input ===";
const OUTPUT_MARKER: &str = "=== output ===";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptVariant {
    pub variant_id: u8,
    pub instruction_template: String,
    pub few_shot_examples: Vec<FewShotExample>,
}

impl PromptVariant {
    /// Parses a template file. The instruction runs until the first input
    /// marker; input and output blocks must then strictly alternate.
    pub fn parse(variant_id: u8, text: &str) -> Result<Self, AnnotateError> {
        let malformed = |reason: String| AnnotateError::MalformedVariant {
            reason: format!("variant {variant_id}: {reason}"),
        };
        let mut instruction = Vec::new();
        let mut examples = Vec::new();
        let mut current: Option<(Vec<String>, Option<Vec<String>>)> = None;
        for line in text.lines() {
            match line.trim() {
                INPUT_MARKER => {
                    if let Some((input, output)) = current.take() {
                        let output = output
                            .ok_or_else(|| malformed("input block without output".into()))?;
                        examples.push(FewShotExample {
                            input: input.join("\n").trim().to_string(),
                            output: output.join("\n").trim().to_string(),
                        });
                    }
                    current = Some((Vec::new(), None));
                }
                OUTPUT_MARKER => match current.as_mut() {
                    Some((_, output @ None)) => *output = Some(Vec::new()),
                    _ => return Err(malformed("output marker without open input block".into())),
                },
                _ => match current.as_mut() {
                    None => instruction.push(line.to_string()),
                    Some((input, None)) => input.push(line.to_string()),
                    Some((_, Some(output))) => output.push(line.to_string()),
                },
            }
        }
        if let Some((input, output)) = current.take() {
            let output = output.ok_or_else(|| malformed("input block without output".into()))?;
            examples.push(FewShotExample {
                input: input.join("\n").trim().to_string(),
                output: output.join("\n").trim().to_string(),
            });
        }
        let variant = PromptVariant {
            variant_id,
            instruction_template: instruction.join("\n").trim().to_string(),
            few_shot_examples: examples,
        };
        variant.validate()?;
        Ok(variant)
    }

    /// Checks that every required slot appears in the instruction.
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.instruction_template.trim().is_empty() {
            return Err(AnnotateError::MalformedVariant {
                reason: format!("variant {}: empty instruction", self.variant_id),
            });
        }
        for slot in REQUIRED_SLOTS {
            if !self.instruction_template.contains(slot) {
                return Err(AnnotateError::MissingSlot {
                    variant_id: self.variant_id,
                    slot: slot.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// The four built-in variants: one instruction plus three paraphrases with
/// different few-shot selections. The last one doubles as the referee.
pub fn default_variants() -> Vec<PromptVariant> {
    [
        include_str!("templates/variant1.txt"),
        include_str!("templates/variant2.txt"),
        include_str!("templates/variant3.txt"),
        include_str!("templates/variant4.txt"),
    ]
    .iter()
    .enumerate()
    .map(|(i, text)| {
        PromptVariant::parse(i as u8 + 1, text).expect("built-in template parses")
    })
    .collect()
}

/// Fills each slot occurrence left to right. Substituted values are never
/// rescanned, so definitions containing slot-like text stay intact.
fn fill_slots(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let mut earliest: Option<(usize, &str, &str)> = None;
        for &(slot, value) in values {
            if let Some(pos) = rest.find(slot) {
                if earliest.is_none_or(|(best, ..)| pos < best) {
                    earliest = Some((pos, slot, value));
                }
            }
        }
        match earliest {
            Some((pos, slot, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + slot.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

/// Renders the full prompt for one pair: the filled instruction followed by
/// the variant's few-shot examples. Byte-deterministic for a given variant
/// and pair.
pub fn build_prompt(
    variant: &PromptVariant,
    pair: &DefinitionPair,
) -> Result<String, AnnotateError> {
    variant.validate()?;
    let t1 = format_ts(&pair.first.timestamp);
    let t2 = format_ts(&pair.second.timestamp);
    let values = [
        ("{term}", pair.term.as_str()),
        ("{timespan1}", t1.as_str()),
        ("{def1}", pair.first.text.as_str()),
        ("{timespan2}", t2.as_str()),
        ("{def2}", pair.second.text.as_str()),
    ];
    let mut prompt = fill_slots(&variant.instruction_template, &values);
    for example in &variant.few_shot_examples {
        prompt.push_str("\n\nINPUT:\n");
        prompt.push_str(&example.input);
        prompt.push_str("\nOUTPUT:\n");
        prompt.push_str(&example.output);
    }
    Ok(prompt)
}
