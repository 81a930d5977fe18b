//! `harvest`: draw temporally distant definition pairs from a revision
//! source and write them as JSONL.

use anyhow::{Context as _, Result};
use serde_json::json;
use wikitide::harvest::live::{LiveConfig, LiveSource};
use wikitide::harvest::source::{OfflineSource, RevisionSource};
use wikitide::harvest::{collect_pairs, pairs_to_jsonl, HarvestConfig};

use crate::commands::{pretty_json, Context};
use crate::config::Settings;
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::write_text;

fn effective_config(settings: &Settings) -> HarvestConfig {
    let section = &settings.file.harvest;
    let n = settings.limit.map_or(section.n, |cap| section.n.min(cap));
    HarvestConfig {
        n,
        min_gap_days: section.min_gap_days,
        rng_seed: settings.seed,
        allow_duplicate_pages: section.allow_duplicate_pages,
        strict: settings.strict,
        extra_abbreviations: section.extra_abbreviations.clone(),
        max_page_attempts: section.max_page_attempts,
    }
}

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let section = &settings.file.harvest;
    let cfg = effective_config(settings);

    let params = json!({"config": cfg, "source": section.source, "api_url": section.api_url});
    let mut step = StepManifest::new("harvest", &params, &["pairs.jsonl", "harvest_stats.json"]);
    let pages = settings.pages_path();
    if section.source == "offline" {
        let path = pages.as_deref().expect("validated for offline harvest");
        step.input(
            &Settings::configured_name(settings.file.paths.pages.as_deref().expect("present")),
            path,
        )?;
    }

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("harvest_skipped", json!({"reason": "outputs up to date"}));
        println!("harvest: up to date -> {}", ctx.workspace.pairs().display());
        return Ok(());
    }

    logging::event(
        "harvest_start",
        json!({"source": section.source, "n": cfg.n, "seed": cfg.rng_seed}),
    );
    let harvest = match section.source.as_str() {
        "offline" => {
            let path = pages.expect("validated for offline harvest");
            let mut source = OfflineSource::from_path(&path)
                .with_context(|| format!("loading revision dump {}", path.display()))?
                .with_replacement(cfg.allow_duplicate_pages);
            collect_pairs(&mut source, &cfg)?
        }
        _ => {
            let mut live = LiveConfig::default();
            if let Some(url) = &section.api_url {
                live.api_url = url.clone();
            }
            if let Some(interval) = section.min_request_interval_ms {
                live.min_request_interval_ms = interval;
            }
            let mut source: Box<dyn RevisionSource> = Box::new(LiveSource::new(live)?);
            collect_pairs(source.as_mut(), &cfg)?
        }
    };

    write_text(&ctx.workspace.pairs(), &pairs_to_jsonl(&harvest.pairs))?;
    let stats = json!({
        "pairs": harvest.pairs.len(),
        "partial": harvest.partial,
        "skips": harvest.skips,
    });
    write_text(&ctx.workspace.harvest_stats(), &pretty_json(&stats))?;
    manifest::record(&ctx.workspace, &step)?;

    logging::event(
        "harvest_done",
        json!({
            "pairs": harvest.pairs.len(),
            "partial": harvest.partial,
            "pages_seen": harvest.skips.pages_seen,
        }),
    );
    println!(
        "harvest: {} pairs from {} pages (partial: {}) -> {}",
        harvest.pairs.len(),
        harvest.skips.pages_seen,
        harvest.partial,
        ctx.workspace.pairs().display()
    );
    Ok(())
}
