//! `report`: pick the best sweep by held-out macro F1 and write the metric
//! tables.

use std::path::Path;

use anyhow::{Context as _, Result};
use serde_json::json;
use wikitide::bootstrap::checkpoint::{read_history, read_status};
use wikitide::eval::{best_iteration, report_table};

use crate::commands::bootstrap::status_slug;
use crate::commands::{pretty_json, Context};
use crate::logging;
use crate::manifest::StepManifest;
use crate::workspace::write_text;
use crate::{manifest, workspace::Workspace};

/// Registers every checkpoint file the step reads, keyed workspace-relative
/// so manifests compare across workspace locations.
pub(crate) fn checkpoint_inputs(ws: &Workspace, step: &mut StepManifest) -> Result<()> {
    let dir = ws.checkpoint_dir();
    let add = |step: &mut StepManifest, path: &Path| -> Result<()> {
        let rel = path
            .strip_prefix(ws.root())
            .expect("checkpoint lives in the workspace")
            .to_string_lossy()
            .into_owned();
        step.input(&rel, path)
    };
    add(step, &dir.join("status.json"))
        .context("report needs a checkpoint (run `bootstrap` first)")?;
    let sweeps = dir.join("sweeps");
    let mut files: Vec<_> = std::fs::read_dir(&sweeps)
        .with_context(|| format!("listing {}", sweeps.display()))?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .collect();
    files.sort();
    for file in files {
        add(step, &file)?;
    }
    Ok(())
}

pub fn run(ctx: &Context) -> Result<()> {
    let params = json!({});
    let outputs = ["report/metrics.json", "report/metrics.txt"];
    let mut step = StepManifest::new("report", &params, &outputs);
    checkpoint_inputs(&ctx.workspace, &mut step)?;

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("report_skipped", json!({"reason": "outputs up to date"}));
        println!(
            "report: up to date -> {}",
            ctx.workspace.metrics_json().display()
        );
        return Ok(());
    }

    let dir = ctx.workspace.checkpoint_dir();
    let history = read_history(&dir)?;
    let status = read_status(&dir)?;
    let best = best_iteration(&history)?;
    let best_record = history
        .iter()
        .find(|record| record.sweep == best)
        .expect("best sweep comes from this history");
    let final_record = history.last().expect("non-empty history has a last sweep");

    let metrics = json!({
        "sweeps": status.sweeps,
        "status": status_slug(&status.outcome),
        "best_sweep": best,
        "best": best_record.hs_metrics,
        "final_sweep": final_record.sweep,
        "final": final_record.hs_metrics,
    });
    write_text(&ctx.workspace.metrics_json(), &pretty_json(&metrics))?;

    let mut table = String::from("== best sweep ==\n");
    table.push_str(&report_table(&best_record.hs_metrics, Some(best)));
    table.push_str(&format!("\n== final sweep {} ==\n", final_record.sweep));
    table.push_str(&report_table(&final_record.hs_metrics, None));
    write_text(&ctx.workspace.metrics_txt(), &table)?;
    manifest::record(&ctx.workspace, &step)?;

    logging::event(
        "report_done",
        json!({
            "best_sweep": best,
            "best_macro_f1": best_record.hs_metrics.macro_avg.f1,
            "final_macro_f1": final_record.hs_metrics.macro_avg.f1,
        }),
    );
    println!(
        "report: best sweep {} (macro F1 {:.4}), final sweep {} (macro F1 {:.4}) -> {}",
        best,
        best_record.hs_metrics.macro_avg.f1,
        final_record.sweep,
        final_record.hs_metrics.macro_avg.f1,
        ctx.workspace.metrics_json().display()
    );
    Ok(())
}
