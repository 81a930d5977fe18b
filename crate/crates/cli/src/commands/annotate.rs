//! `annotate`: vote on every harvested pair with the four prompt variants,
//! resolve consensus, and write the labeled corpus plus agreement stats.

use std::cell::Cell;
use std::path::Path;

use anyhow::{bail, Context as _, Result};
use serde::Serialize;
use serde_json::json;
use wikitide::annotate::client::{
    AnnotatorClient, ClientError, FixedScriptClient, HeuristicClient, HttpChatClient,
};
use wikitide::annotate::kappa::{fleiss_kappa, matrix_to_csv, KappaError};
use wikitide::annotate::pool::{annotate_pool, labeled_to_jsonl};
use wikitide::annotate::prompt::{default_variants, PromptVariant};
use wikitide::annotate::AnnotatorSettings;
use wikitide::harvest::{pairs_from_jsonl, PairRecord};

use crate::commands::{apply_limit, pretty_json, Context};
use crate::config::Settings;
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::{read_text, write_text};

/// Counts completions so API usage is auditable from the logs.
struct CountingClient<'a> {
    inner: &'a dyn AnnotatorClient,
    calls: Cell<u64>,
}

impl AnnotatorClient for CountingClient<'_> {
    fn complete(&self, settings: &AnnotatorSettings, prompt: &str) -> Result<String, ClientError> {
        self.calls.set(self.calls.get() + 1);
        self.inner.complete(settings, prompt)
    }
}

#[derive(Serialize)]
struct DiscardRow<'a> {
    #[serde(flatten)]
    pair: PairRecord,
    reason: &'a str,
}

/// Scripted responses live in a JSONL file of `{"response": "..."}` rows so
/// multi-line completions survive round-tripping.
fn load_script(path: &Path) -> Result<Vec<String>> {
    let raw = read_text(path)?;
    let mut responses = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("script {} line {}", path.display(), idx + 1))?;
        match value.get("response").and_then(|v| v.as_str()) {
            Some(text) => responses.push(text.to_string()),
            None => bail!(
                "script {} line {}: expected an object with a \"response\" string",
                path.display(),
                idx + 1
            ),
        }
    }
    Ok(responses)
}

fn load_variants(settings: &Settings) -> Result<Vec<PromptVariant>> {
    match settings.variant_paths() {
        None => Ok(default_variants()),
        Some(paths) => paths
            .iter()
            .enumerate()
            .map(|(i, path)| {
                let text = read_text(path)?;
                PromptVariant::parse(i as u8 + 1, &text)
                    .with_context(|| format!("parsing prompt variant {}", path.display()))
            })
            .collect(),
    }
}

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let section = &settings.file.annotation;
    let annotator = AnnotatorSettings {
        temperature: section.temperature,
        top_p: section.top_p,
        referee_confirms_unanimity: section.referee_confirms_unanimity,
        max_retries: section.max_retries,
        ..AnnotatorSettings::default()
    };

    let params = json!({
        "settings": annotator,
        "client": section.client,
        "max_pairs": section.max_pairs,
        "limit": settings.limit,
        "variants": section.variants.as_ref().map_or_else(
            || "builtin".to_string(),
            |paths| format!("{} files", paths.len()),
        ),
    });
    let outputs = [
        "labeled.jsonl",
        "discarded.jsonl",
        "vote_matrix.csv",
        "agreement.json",
    ];
    let mut step = StepManifest::new("annotate", &params, &outputs);
    step.input("pairs.jsonl", &ctx.workspace.pairs())
        .context("annotate needs pairs.jsonl (run `harvest` first)")?;
    if let Some(script) = settings.script_path() {
        step.input(
            &Settings::configured_name(section.script.as_deref().expect("present")),
            &script,
        )?;
    }
    if let (Some(resolved), Some(configured)) = (settings.variant_paths(), &section.variants) {
        for (path, name) in resolved.iter().zip(configured) {
            step.input(&Settings::configured_name(name), path)?;
        }
    }

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("annotate_skipped", json!({"reason": "outputs up to date"}));
        println!("annotate: up to date -> {}", ctx.workspace.labeled().display());
        return Ok(());
    }

    let mut pairs = pairs_from_jsonl(&read_text(&ctx.workspace.pairs())?)?;
    // max_pairs leaves the tail of the harvest unlabeled so the split step
    // has a pool to draw from; --limit then truncates further if smaller.
    apply_limit(&mut pairs, section.max_pairs);
    let truncated = apply_limit(&mut pairs, settings.limit);
    let variants = load_variants(settings)?;

    let client: Box<dyn AnnotatorClient> = match section.client.as_str() {
        "heuristic" => Box::new(HeuristicClient),
        "scripted" => {
            let path = settings.script_path().expect("validated for scripted client");
            Box::new(FixedScriptClient::new(load_script(&path)?))
        }
        _ => Box::new(HttpChatClient::from_env()?),
    };
    let counting = CountingClient {
        inner: client.as_ref(),
        calls: Cell::new(0),
    };

    logging::event(
        "annotate_start",
        json!({"pairs": pairs.len(), "client": section.client, "truncated": truncated}),
    );
    let outcome = annotate_pool(&pairs, &counting, &annotator, &variants)?;

    write_text(&ctx.workspace.labeled(), &labeled_to_jsonl(&outcome.labeled))?;
    let mut discarded = String::new();
    for drop in &outcome.discarded {
        let row = DiscardRow {
            pair: PairRecord::from(&drop.pair),
            reason: &drop.reason,
        };
        discarded.push_str(&serde_json::to_string(&row).expect("discard row serializes"));
        discarded.push('\n');
    }
    write_text(&ctx.workspace.discarded(), &discarded)?;
    write_text(&ctx.workspace.vote_matrix(), &matrix_to_csv(&outcome.vote_matrix))?;

    let agreement = match fleiss_kappa(&outcome.vote_matrix) {
        Ok(kappa) => json!({
            "fleiss_kappa": kappa.value,
            "degenerate": kappa.degenerate,
            "items": outcome.vote_matrix.len(),
            "raters": annotator.num_total,
        }),
        Err(KappaError::Empty) => json!({
            "fleiss_kappa": null,
            "degenerate": false,
            "items": 0,
            "raters": annotator.num_total,
        }),
        Err(other) => return Err(other.into()),
    };
    write_text(&ctx.workspace.agreement(), &pretty_json(&agreement))?;
    manifest::record(&ctx.workspace, &step)?;

    let kappa_note = agreement
        .get("fleiss_kappa")
        .and_then(|v| v.as_f64())
        .map_or("n/a".to_string(), |v| format!("{v:.4}"));
    logging::event(
        "annotate_done",
        json!({
            "labeled": outcome.labeled.len(),
            "discarded": outcome.discarded.len(),
            "annotator_calls": counting.calls.get(),
            "fleiss_kappa": agreement.get("fleiss_kappa"),
        }),
    );
    println!(
        "annotate: {} labeled, {} discarded, kappa {} ({} annotator calls) -> {}",
        outcome.labeled.len(),
        outcome.discarded.len(),
        kappa_note,
        counting.calls.get(),
        ctx.workspace.labeled().display()
    );
    Ok(())
}
