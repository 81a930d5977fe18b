//! `bootstrap`: grow the training set by iterative self-training and write
//! the checkpoint directory.

use anyhow::{bail, Context as _, Result};
use serde_json::json;
use wikitide::bootstrap::checkpoint::write_checkpoint;
use wikitide::bootstrap::classifier::default_registry;
use wikitide::bootstrap::{bootstrap_run, BootstrapConfig, BootstrapStatus, DatasetSplits};
use wikitide::harvest::{pairs_from_jsonl, DefinitionPair};

use crate::commands::split::examples_from_jsonl;
use crate::commands::Context;
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::read_text;

pub(crate) fn status_slug(status: &BootstrapStatus) -> &'static str {
    match status {
        BootstrapStatus::PoolExhausted => "pool_exhausted",
        BootstrapStatus::SweepCapReached => "sweep_cap_reached",
        BootstrapStatus::Stalled => "stalled",
        BootstrapStatus::ClassifierFailed { .. } => "classifier_failed",
    }
}

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let section = &settings.file.bootstrap;
    let cfg = BootstrapConfig {
        k: section.k,
        max_sweeps: section.max_sweeps,
        rng_seed: settings.seed,
        render_format: section.render_format.clone(),
        drain_predicted_label: section.drain_predicted_label,
    };

    let params = json!({"config": cfg, "classifier": settings.classifier});
    let outputs = [
        "checkpoint/config.json",
        "checkpoint/status.json",
        "checkpoint/final_ts.jsonl",
    ];
    let mut step = StepManifest::new("bootstrap", &params, &outputs);
    step.input("splits/ts.jsonl", &ctx.workspace.split_ts())
        .context("bootstrap needs splits (run `split` first)")?;
    step.input("splits/hs.jsonl", &ctx.workspace.split_hs())?;
    step.input("splits/ds.jsonl", &ctx.workspace.split_ds())?;

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("bootstrap_skipped", json!({"reason": "outputs up to date"}));
        println!(
            "bootstrap: up to date -> {}",
            ctx.workspace.checkpoint_dir().display()
        );
        return Ok(());
    }

    let ts = examples_from_jsonl(&read_text(&ctx.workspace.split_ts())?, "splits/ts.jsonl")?;
    let hs = examples_from_jsonl(&read_text(&ctx.workspace.split_hs())?, "splits/hs.jsonl")?;
    let ds: Vec<DefinitionPair> = pairs_from_jsonl(&read_text(&ctx.workspace.split_ds())?)?;
    let splits = DatasetSplits { ts, ds, hs };

    logging::event(
        "bootstrap_start",
        json!({
            "ts": splits.ts.len(),
            "ds": splits.ds.len(),
            "hs": splits.hs.len(),
            "k": cfg.k,
            "classifier": settings.classifier,
        }),
    );
    let mut classifier = default_registry().create(&settings.classifier, settings.seed)?;
    let run = bootstrap_run(splits, classifier.as_mut(), &cfg)?;

    let dir = ctx.workspace.checkpoint_dir();
    write_checkpoint(&dir, &cfg, &run)?;

    if let BootstrapStatus::ClassifierFailed { sweep, message } = &run.status {
        logging::event(
            "bootstrap_failed",
            json!({"sweep": sweep, "message": message, "sweeps_kept": run.history.len()}),
        );
        bail!(
            "classifier failed at sweep {sweep}: {message} \
             (partial checkpoint with {} sweep(s) kept at {})",
            run.history.len(),
            dir.display()
        );
    }

    manifest::record(&ctx.workspace, &step)?;
    logging::event(
        "bootstrap_done",
        json!({
            "sweeps": run.history.len(),
            "status": status_slug(&run.status),
            "final_ts": run.final_ts.len(),
        }),
    );
    println!(
        "bootstrap: {} sweeps, status {}, final ts {} -> {}",
        run.history.len(),
        status_slug(&run.status),
        run.final_ts.len(),
        dir.display()
    );
    Ok(())
}
