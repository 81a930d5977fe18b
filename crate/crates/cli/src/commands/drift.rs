//! `drift`: embed each sweep's newly promoted fundamental-change pairs and
//! export the mean definition-distance series.

use anyhow::Result;
use serde_json::json;
use wikitide::bootstrap::checkpoint::read_history;
use wikitide::eval::{default_embedder, drift_csv, drift_series, drift_svg, DriftSeries};

use crate::commands::report::checkpoint_inputs;
use crate::commands::Context;
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::write_text;

pub fn run(ctx: &Context) -> Result<()> {
    let params = json!({"embedder": ctx.settings.file.evaluation.embedder});
    let outputs = ["drift/drift.csv", "drift/drift.svg"];
    let mut step = StepManifest::new("drift", &params, &outputs);
    checkpoint_inputs(&ctx.workspace, &mut step)?;

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("drift_skipped", json!({"reason": "outputs up to date"}));
        println!("drift: up to date -> {}", ctx.workspace.drift_csv().display());
        return Ok(());
    }

    let history = read_history(&ctx.workspace.checkpoint_dir())?;
    // The embedder's vocabulary comes from every promoted definition, not
    // just the fundamental-change ones, for a stabler document frequency.
    let corpus: Vec<&str> = history
        .iter()
        .flat_map(|record| record.added.iter())
        .flat_map(|example| {
            [
                example.pair.first.text.as_str(),
                example.pair.second.text.as_str(),
            ]
        })
        .collect();
    let series = if corpus.is_empty() {
        DriftSeries::default()
    } else {
        drift_series(&history, &default_embedder(&corpus)?)
    };

    write_text(&ctx.workspace.drift_csv(), &drift_csv(&series))?;
    write_text(&ctx.workspace.drift_svg(), &drift_svg(&series))?;
    manifest::record(&ctx.workspace, &step)?;

    logging::event(
        "drift_done",
        json!({"sweeps_tracked": series.per_sweep.len(), "history_sweeps": history.len()}),
    );
    println!(
        "drift: {} of {} sweeps added fundamental-change pairs -> {}",
        series.per_sweep.len(),
        history.len(),
        ctx.workspace.drift_csv().display()
    );
    Ok(())
}
