//! `wictsv`: adapt the bootstrapped classifier to binary target-sense
//! verification and score it against the published splits.

use anyhow::{Context as _, Result};
use serde_json::json;
use wikitide::annotate::client::{AnnotatorClient, HttpChatClient};
use wikitide::annotate::AnnotatorSettings;
use wikitide::bootstrap::checkpoint::read_final_ts;
use wikitide::bootstrap::classifier::{default_registry, TrainingExample};
use wikitide::bootstrap::render_input;
use wikitide::wictsv::{
    all_true_baseline, load_wictsv, predict_wictsv, score_predictions, ContextEchoGenerator,
    DefinitionGenerator,
};

use crate::commands::{apply_limit, pretty_json, Context};
use crate::logging;
use crate::manifest::{self, StepManifest};
use crate::workspace::write_text;

pub fn run(ctx: &Context) -> Result<()> {
    let settings = &ctx.settings;
    let section = &settings.file.wictsv;
    let dir = settings.wictsv_dir().expect("validated for wictsv");
    let split = &section.split;

    let examples_path = dir.join(format!("{split}_examples.txt"));
    let definitions_path = dir.join(format!("{split}_definitions.txt"));
    let labels_path = {
        let path = dir.join(format!("{split}_labels.txt"));
        path.exists().then_some(path)
    };

    let params = json!({
        "split": split,
        "generator": section.generator,
        "classifier": settings.classifier,
        "seed": settings.seed,
        "limit": settings.limit,
    });
    let outputs = ["wictsv/predictions.tsv", "wictsv/report.json"];
    let mut step = StepManifest::new("wictsv", &params, &outputs);
    step.input(&format!("{split}_examples.txt"), &examples_path)?;
    step.input(&format!("{split}_definitions.txt"), &definitions_path)?;
    if let Some(labels) = &labels_path {
        step.input(&format!("{split}_labels.txt"), labels)?;
    }
    step.input("checkpoint/final_ts.jsonl", &ctx.workspace.checkpoint_dir().join("final_ts.jsonl"))
        .context("wictsv needs a trained checkpoint (run `bootstrap` first)")?;

    if manifest::is_current(&ctx.workspace, &step) {
        logging::event("wictsv_skipped", json!({"reason": "outputs up to date"}));
        println!(
            "wictsv: up to date -> {}",
            ctx.workspace.wictsv_report().display()
        );
        return Ok(());
    }

    let mut instances = load_wictsv(&examples_path, &definitions_path, labels_path.as_deref())?;
    let truncated = apply_limit(&mut instances, settings.limit);

    let final_ts = read_final_ts(&ctx.workspace.checkpoint_dir())?;
    let training: Vec<TrainingExample> = final_ts
        .iter()
        .map(|example| TrainingExample {
            fingerprint: example.pair.fingerprint(),
            input: render_input(&example.pair),
            label: example.label,
        })
        .collect();
    let mut model = default_registry().create(&settings.classifier, settings.seed)?;
    model.fit(&training)?;

    let generator: Box<dyn DefinitionGenerator> = match section.generator.as_str() {
        "echo" => Box::new(ContextEchoGenerator),
        _ => {
            let client = HttpChatClient::from_env()?;
            let chat = AnnotatorSettings {
                temperature: settings.file.annotation.temperature,
                top_p: settings.file.annotation.top_p,
                ..AnnotatorSettings::default()
            };
            Box::new(move |target: &str, context: &str| {
                let prompt = format!(
                    "Give a one-sentence dictionary definition of the word \"{target}\" \
                     as it is used in the following sentence. Reply with the definition only.\n\n\
                     {context}"
                );
                client.complete(&chat, &prompt)
            })
        }
    };

    logging::event(
        "wictsv_start",
        json!({
            "split": split,
            "instances": instances.len(),
            "truncated": truncated,
            "training_rows": training.len(),
        }),
    );
    let predictions = predict_wictsv(model.as_ref(), &instances, generator.as_ref())?;
    let mut tsv = String::new();
    for outcome in &predictions {
        tsv.push_str(if outcome.value { "T\n" } else { "F\n" });
    }
    write_text(&ctx.workspace.wictsv_predictions(), &tsv)?;

    let have_gold = !instances.is_empty() && instances.iter().all(|i| i.gold.is_some());
    let report = if have_gold {
        let score = score_predictions(&instances, &predictions)?;
        let baseline = all_true_baseline(&instances)?;
        json!({
            "split": split,
            "instances": instances.len(),
            "accuracy": score.accuracy,
            "f1": score.f1,
            "baseline_accuracy": baseline.accuracy,
            "baseline_f1": baseline.f1,
        })
    } else {
        json!({
            "split": split,
            "instances": instances.len(),
            "scored": false,
        })
    };
    write_text(&ctx.workspace.wictsv_report(), &pretty_json(&report))?;
    manifest::record(&ctx.workspace, &step)?;

    logging::event("wictsv_done", report.clone());
    if have_gold {
        println!(
            "wictsv {}: accuracy {:.4} f1 {:.4} (all-true baseline {:.4}/{:.4}) on {} instances -> {}",
            split,
            report["accuracy"].as_f64().expect("accuracy set"),
            report["f1"].as_f64().expect("f1 set"),
            report["baseline_accuracy"].as_f64().expect("baseline set"),
            report["baseline_f1"].as_f64().expect("baseline set"),
            instances.len(),
            ctx.workspace.wictsv_report().display()
        );
    } else {
        println!(
            "wictsv {}: {} predictions (no gold labels, not scored) -> {}",
            split,
            instances.len(),
            ctx.workspace.wictsv_predictions().display()
        );
    }
    Ok(())
}
