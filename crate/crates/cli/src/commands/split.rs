//! `split`: shuffle the consensus-labeled pairs into training and held-out
//! sets; everything harvested but not labeled becomes the unlabeled pool.

use anyhow::{Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wikitide::annotate::pool::labeled_from_jsonl;
use wikitide::annotate::Label;
use wikitide::bootstrap::checkpoint::TsRecord;
use wikitide::bootstrap::{split_dataset, LabeledExample};
use wikitide::harvest::{pairs_from_jsonl, DefinitionPair, PairRecord};

use crate::commands::Context;
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::{read_text, write_text};

pub(crate) fn examples_to_jsonl(examples: &[LabeledExample]) -> String {
    let mut out = String::new();
    for example in examples {
        let row = TsRecord {
            pair: PairRecord::from(&example.pair),
            label: example.label,
            origin: example.origin,
        };
        out.push_str(&serde_json::to_string(&row).expect("split row serializes"));
        out.push('\n');
    }
    out
}

pub(crate) fn examples_from_jsonl(text: &str, what: &str) -> Result<Vec<LabeledExample>> {
    let mut examples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TsRecord = serde_json::from_str(line)
            .with_context(|| format!("{what} line {}", idx + 1))?;
        examples.push(LabeledExample {
            pair: row
                .pair
                .try_into()
                .with_context(|| format!("{what} line {}", idx + 1))?,
            label: row.label,
            origin: row.origin,
        });
    }
    Ok(examples)
}

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let sizes = settings.file.split.expect("validated for split");

    let params = json!({"ts": sizes.ts, "hs": sizes.hs, "seed": settings.seed});
    let outputs = ["splits/ts.jsonl", "splits/hs.jsonl", "splits/ds.jsonl"];
    let mut step = StepManifest::new("split", &params, &outputs);
    step.input("labeled.jsonl", &ctx.workspace.labeled())
        .context("split needs labeled.jsonl (run `annotate` first)")?;
    step.input("pairs.jsonl", &ctx.workspace.pairs())
        .context("split needs pairs.jsonl (run `harvest` first)")?;

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("split_skipped", json!({"reason": "outputs up to date"}));
        println!("split: up to date -> {}", ctx.workspace.split_ts().display());
        return Ok(());
    }

    let records = labeled_from_jsonl(&read_text(&ctx.workspace.labeled())?)?;
    let labeled: Vec<(DefinitionPair, Label)> = records
        .into_iter()
        .map(|record| record.into_labeled_pair())
        .collect::<Result<_, _>>()?;
    let labeled_fingerprints: std::collections::BTreeSet<String> =
        labeled.iter().map(|(pair, _)| pair.fingerprint()).collect();

    let all_pairs = pairs_from_jsonl(&read_text(&ctx.workspace.pairs())?)?;
    let pool: Vec<DefinitionPair> = all_pairs
        .into_iter()
        .filter(|pair| !labeled_fingerprints.contains(&pair.fingerprint()))
        .collect();

    logging::event(
        "split_start",
        json!({"labeled": labeled.len(), "pool": pool.len(), "ts": sizes.ts, "hs": sizes.hs}),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let splits = split_dataset(&labeled, &pool, (sizes.ts, sizes.hs), &mut rng)?;

    write_text(&ctx.workspace.split_ts(), &examples_to_jsonl(&splits.ts))?;
    write_text(&ctx.workspace.split_hs(), &examples_to_jsonl(&splits.hs))?;
    let mut ds = String::new();
    for pair in &splits.ds {
        ds.push_str(&serde_json::to_string(&PairRecord::from(pair)).expect("pool row serializes"));
        ds.push('\n');
    }
    write_text(&ctx.workspace.split_ds(), &ds)?;
    manifest::record(&ctx.workspace, &step)?;

    logging::event(
        "split_done",
        json!({"ts": splits.ts.len(), "hs": splits.hs.len(), "ds": splits.ds.len()}),
    );
    println!(
        "split: ts={} hs={} ds={} -> {}",
        splits.ts.len(),
        splits.hs.len(),
        splits.ds.len(),
        ctx.workspace.path("splits").display()
    );
    Ok(())
}
