//! Acceptance checks for the shipped pipeline. Each test covers one
//! numbered criterion, prints exactly one `criterion N (<name>): PASS|FAIL`
//! line, and enforces its own wall-clock budget. Run with `--nocapture` to
//! see the lines for passing tests.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wikitide::annotate::kappa::fleiss_kappa;
use wikitide::annotate::{
    referee_required, resolve_consensus_with, AnnotatorSettings, AnnotatorVote, ConsensusLabel,
    Label,
};
use wikitide::bootstrap::classifier::{default_registry, Classifier, ClassifierError, TrainingExample};
use wikitide::bootstrap::{
    bootstrap_run, render_input, BootstrapConfig, BootstrapStatus, DatasetSplits, ExampleOrigin,
    IterationRecord, LabeledExample, PseudoExample, RENDER_FORMAT_V1,
};
use wikitide::eval::{compute_metrics, cosine_distance, drift_series, MetricsReport};
use wikitide::harvest::source::OfflineSource;
use wikitide::harvest::{collect_pairs, pairs_to_jsonl, Definition, DefinitionPair, HarvestConfig};
use wikitide::wictsv::{all_true_baseline, load_wictsv, project_label, WicTsvInstance};

/// Runs one criterion body, prints its single PASS/FAIL line, and fails the
/// test on panic or blown budget. `body` may return a short note appended to
/// the line.
fn criterion<F>(number: u8, name: &str, budget: Option<Duration>, body: F)
where
    F: FnOnce() -> Option<String>,
{
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    match outcome {
        Ok(note) => {
            if let Some(budget) = budget {
                if elapsed > budget {
                    println!(
                        "criterion {number} ({name}): FAIL over budget ({:.2}s > {:.0}s)",
                        elapsed.as_secs_f64(),
                        budget.as_secs_f64()
                    );
                    panic!("criterion {number} exceeded its {budget:?} budget");
                }
            }
            let suffix = note.map(|n| format!(" [{n}]")).unwrap_or_default();
            println!(
                "criterion {number} ({name}): PASS in {:.2}s{suffix}",
                elapsed.as_secs_f64()
            );
        }
        Err(payload) => {
            println!(
                "criterion {number} ({name}): FAIL in {:.2}s",
                elapsed.as_secs_f64()
            );
            resume_unwind(payload);
        }
    }
}

fn vote(label: u8) -> AnnotatorVote {
    AnnotatorVote {
        label: Label::from_u8(label).expect("label in 0..3"),
        confidence: 7,
        explanation: format!("vote {label}"),
    }
}

/// Independent restatement of the consensus protocol:
/// (final label or None for discarded, rule name, referee consulted).
fn consensus_oracle(primary: [u8; 3], referee: u8) -> (Option<u8>, &'static str, bool) {
    let count = |l: u8| primary.iter().filter(|&&v| v == l).count();
    if count(2) == 3 {
        return if referee == 2 {
            (Some(2), "unanimous_2", true)
        } else {
            (Some(1), "demoted_2", true)
        };
    }
    if count(2) == 2 {
        return (Some(1), "demoted_2", false);
    }
    if count(0) >= 2 {
        return (Some(0), "majority", false);
    }
    if count(1) >= 2 {
        return (Some(1), "majority", false);
    }
    if referee == 2 {
        (None, "discarded", true)
    } else {
        (Some(referee), "referee", true)
    }
}

#[test]
fn criterion_01_consensus_truth_table() {
    criterion(1, "consensus truth table", Some(Duration::from_secs(1)), || {
        let settings = AnnotatorSettings::default();
        let mut cases = 0usize;
        for p0 in 0..3u8 {
            for p1 in 0..3u8 {
                for p2 in 0..3u8 {
                    for r in 0..3u8 {
                        let primary = [p0, p1, p2];
                        let consulted = Cell::new(false);
                        let result = resolve_consensus_with(
                            &settings,
                            [vote(p0), vote(p1), vote(p2)],
                            || {
                                consulted.set(true);
                                vote(r)
                            },
                        );
                        let (want_label, want_rule, want_referee) = consensus_oracle(primary, r);
                        let got_label = match result.label {
                            ConsensusLabel::Assigned(l) => Some(l.as_u8()),
                            ConsensusLabel::Discarded => None,
                        };
                        assert_eq!(
                            got_label, want_label,
                            "label mismatch for primaries {primary:?} referee {r}"
                        );
                        assert_eq!(
                            result.rule_applied.as_str(),
                            want_rule,
                            "rule mismatch for primaries {primary:?} referee {r}"
                        );
                        assert_eq!(
                            consulted.get(),
                            want_referee,
                            "referee consultation mismatch for primaries {primary:?} referee {r}"
                        );
                        assert_eq!(
                            result.referee_vote.is_some(),
                            consulted.get(),
                            "referee vote recorded iff consulted, primaries {primary:?}"
                        );
                        let labels = [
                            Label::from_u8(p0).unwrap(),
                            Label::from_u8(p1).unwrap(),
                            Label::from_u8(p2).unwrap(),
                        ];
                        assert_eq!(
                            referee_required(&settings, labels),
                            consulted.get(),
                            "referee_required disagrees with actual consultation for {primary:?}"
                        );
                        if got_label == Some(2) {
                            assert_eq!(
                                (primary, r),
                                ([2, 2, 2], 2),
                                "label 2 emitted outside the all-2 case"
                            );
                        }
                        cases += 1;
                    }
                }
            }
        }
        assert_eq!(cases, 81);
        None
    });
}

#[test]
fn criterion_02_fleiss_kappa_oracle() {
    criterion(2, "fleiss kappa oracle", Some(Duration::from_secs(5)), || {
        // Perfect agreement across several used categories.
        let perfect: Vec<Vec<u64>> = (0..12)
            .map(|i| {
                let mut row = vec![0u64; 3];
                row[i % 3] = 4;
                row
            })
            .collect();
        let kappa = fleiss_kappa(&perfect).unwrap();
        assert!((kappa.value - 1.0).abs() <= 1e-9);
        assert!(!kappa.degenerate);

        // Every vote in one category: agreement is perfect but chance
        // correction is undefined, reported as a degenerate 1.0.
        let single: Vec<Vec<u64>> = vec![vec![5, 0, 0]; 8];
        let kappa = fleiss_kappa(&single).unwrap();
        assert!(kappa.degenerate);
        assert!((kappa.value - 1.0).abs() <= 1e-9);

        // Two items, two raters, both split: the textbook -1 case.
        let kappa = fleiss_kappa(&[vec![1, 1, 0], vec![1, 1, 0]]).unwrap();
        assert!((kappa.value + 1.0).abs() <= 1e-9);

        // Random matrices against the direct formula.
        let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
        for trial in 0..500 {
            let items = rng.random_range(1..=40usize);
            let raters = rng.random_range(2..=6usize);
            let categories = rng.random_range(2..=5usize);
            let mut matrix = vec![vec![0u64; categories]; items];
            for row in &mut matrix {
                for _ in 0..raters {
                    row[rng.random_range(0..categories)] += 1;
                }
            }
            let got = fleiss_kappa(&matrix).unwrap();

            let n = raters as f64;
            let total = (items * raters) as f64;
            let mut column = vec![0u64; categories];
            for row in &matrix {
                for (j, &c) in row.iter().enumerate() {
                    column[j] += c;
                }
            }
            if column.iter().any(|&c| c as f64 == total) {
                assert!(got.degenerate, "trial {trial}: single-category matrix");
                assert!((got.value - 1.0).abs() <= 1e-9);
                continue;
            }
            let observed = matrix
                .iter()
                .map(|row| {
                    let squares: u64 = row.iter().map(|&c| c * c).sum();
                    (squares as f64 - n) / (n * (n - 1.0))
                })
                .sum::<f64>()
                / items as f64;
            let expected_chance = column
                .iter()
                .map(|&c| (c as f64 / total).powi(2))
                .sum::<f64>();
            let want = (observed - expected_chance) / (1.0 - expected_chance);
            assert!(!got.degenerate, "trial {trial}: unexpectedly degenerate");
            assert!(
                (got.value - want).abs() <= 1e-9,
                "trial {trial}: got {} want {want}",
                got.value
            );
        }
        None
    });
}

fn smoke_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/smoke")
        .join(name)
}

#[test]
fn criterion_03_harvest_invariants() {
    criterion(3, "harvest invariants", Some(Duration::from_secs(5)), || {
        let dump = smoke_fixture("pages.ndjson");

        // Independent per-page lower medians: sort by (timestamp, revid),
        // take the element at index (len - 1) / 2.
        let text = std::fs::read_to_string(&dump).unwrap();
        let mut medians: BTreeMap<String, DateTime<Utc>> = BTreeMap::new();
        let mut page_count = 0usize;
        for line in text.lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            page_count += 1;
            let title = value["title"].as_str().unwrap().to_string();
            let mut revisions: Vec<(DateTime<Utc>, u64)> = value["revisions"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| {
                    let ts = DateTime::parse_from_rfc3339(r["timestamp"].as_str().unwrap())
                        .unwrap()
                        .with_timezone(&Utc);
                    (ts, r["revid"].as_u64().unwrap())
                })
                .collect();
            if revisions.len() < 2 {
                continue;
            }
            revisions.sort();
            medians.insert(title, revisions[(revisions.len() - 1) / 2].0);
        }
        assert_eq!(page_count, 50, "fixture dump should hold 50 pages");

        let config = HarvestConfig {
            n: 30,
            min_gap_days: 365,
            rng_seed: 77,
            ..HarvestConfig::default()
        };
        let run = || {
            let mut source = OfflineSource::from_path(&dump).unwrap();
            collect_pairs(&mut source, &config).unwrap()
        };
        let first = run();
        let second = run();

        assert_eq!(first.pairs.len(), 30);
        assert!(!first.partial);
        for pair in &first.pairs {
            let median = medians
                .get(&pair.term)
                .unwrap_or_else(|| panic!("pair term {:?} is not a fixture page", pair.term));
            assert!(
                pair.first.timestamp <= *median,
                "{}: first side after median",
                pair.term
            );
            assert!(
                *median <= pair.second.timestamp,
                "{}: second side before median",
                pair.term
            );
            assert!(
                pair.first.timestamp < pair.second.timestamp,
                "{}: sides out of order",
                pair.term
            );
            assert!(
                pair.second.timestamp - pair.first.timestamp >= chrono::Duration::days(365),
                "{}: gap below minimum",
                pair.term
            );
        }
        assert_eq!(
            pairs_to_jsonl(&first.pairs),
            pairs_to_jsonl(&second.pairs),
            "same seed, same dump: harvests must be byte-identical"
        );
        None
    });
}

/// Disjoint eight-word vocabularies, one per class.
const CLASS_BANKS: [[&str; 8]; 3] = [
    [
        "river", "delta", "estuary", "marsh", "sediment", "lagoon", "bayou", "floodplain",
    ],
    [
        "sonata", "allegro", "cadenza", "octave", "fugue", "motif", "crescendo", "arpeggio",
    ],
    [
        "quark", "lepton", "boson", "hadron", "muon", "gluon", "neutrino", "meson",
    ],
];

/// A pair whose definitions draw only from `bank`, with a unique term so
/// fingerprints never collide.
fn bank_pair(prefix: &str, bank: &[&str], serial: usize) -> DefinitionPair {
    let w = |k: usize| bank[(serial + k) % bank.len()];
    DefinitionPair {
        term: format!("{prefix}{serial}"),
        first: Definition {
            text: format!("{} {} {} {}.", w(0), w(1), w(2), w(3)),
            timestamp: Utc.with_ymd_and_hms(2010, 1, 1, 0, 0, 0).unwrap(),
            revision_id: 1,
        },
        second: Definition {
            text: format!("{} {} {} {}.", w(4), w(5), w(6), w(7)),
            timestamp: Utc.with_ymd_and_hms(2015, 1, 1, 0, 0, 0).unwrap(),
            revision_id: 2,
        },
    }
}

fn labeled(pair: DefinitionPair, class: usize) -> LabeledExample {
    LabeledExample {
        pair,
        label: Label::from_u8(class as u8).unwrap(),
        origin: ExampleOrigin::Seed,
    }
}

#[derive(Default)]
struct Trace {
    /// Fingerprints passed to each fit call, in call order.
    fits: Vec<BTreeSet<String>>,
    /// One record per predict_proba_batch call.
    batches: Vec<BatchRecord>,
}

struct BatchRecord {
    fit_index: usize,
    first_after_fit: bool,
    inputs: Vec<String>,
    argmax: Vec<Label>,
}

/// Wraps a classifier to log fit fingerprints and batch predictions without
/// changing behavior. Must override the batch entry point so the batches it
/// sees are the ones the sweep loop issued.
struct Instrumented<'a> {
    inner: Box<dyn Classifier>,
    trace: &'a RefCell<Trace>,
    batches_since_fit: Cell<usize>,
}

impl Classifier for Instrumented<'_> {
    fn fit(&mut self, examples: &[TrainingExample]) -> Result<(), ClassifierError> {
        self.trace
            .borrow_mut()
            .fits
            .push(examples.iter().map(|e| e.fingerprint.clone()).collect());
        self.batches_since_fit.set(0);
        self.inner.fit(examples)
    }

    fn predict_proba(&self, input: &str) -> Result<[f64; 3], ClassifierError> {
        self.inner.predict_proba(input)
    }

    fn predict_proba_batch(&self, inputs: &[String]) -> Result<Vec<[f64; 3]>, ClassifierError> {
        let probs = self.inner.predict_proba_batch(inputs)?;
        let argmax = probs
            .iter()
            .map(|p| {
                let mut best = 0usize;
                for candidate in 1..3 {
                    if p[candidate] > p[best] {
                        best = candidate;
                    }
                }
                Label::from_u8(best as u8).unwrap()
            })
            .collect();
        let seq = self.batches_since_fit.get();
        self.batches_since_fit.set(seq + 1);
        let mut trace = self.trace.borrow_mut();
        let fit_index = trace.fits.len().checked_sub(1).expect("fit precedes batches");
        trace.batches.push(BatchRecord {
            fit_index,
            first_after_fit: seq == 0,
            inputs: inputs.to_vec(),
            argmax,
        });
        Ok(probs)
    }
}

#[test]
fn criterion_04_sweep_bookkeeping() {
    criterion(4, "sweep bookkeeping", Some(Duration::from_secs(60)), || {
        let k = 10usize;
        let mut ts = Vec::new();
        let mut hs = Vec::new();
        let mut ds = Vec::new();
        // Per class: 100 seed, 67/67/66 held out, 234/233/233 pool.
        let hs_sizes = [67usize, 67, 66];
        let ds_sizes = [234usize, 233, 233];
        for class in 0..3 {
            let bank = &CLASS_BANKS[class];
            let mut serial = 0usize;
            for _ in 0..100 {
                ts.push(labeled(bank_pair(&format!("c{class}t"), bank, serial), class));
                serial += 1;
            }
            for _ in 0..hs_sizes[class] {
                hs.push(labeled(bank_pair(&format!("c{class}h"), bank, serial), class));
                serial += 1;
            }
            for _ in 0..ds_sizes[class] {
                ds.push(bank_pair(&format!("c{class}d"), bank, serial));
                serial += 1;
            }
        }
        assert_eq!((ts.len(), ds.len(), hs.len()), (300, 700, 200));

        // Rendered input -> fingerprint, for reading pool batches back.
        let mut by_input: BTreeMap<String, String> = BTreeMap::new();
        for pair in ts
            .iter()
            .map(|e| &e.pair)
            .chain(hs.iter().map(|e| &e.pair))
            .chain(ds.iter())
        {
            let previous = by_input.insert(render_input(pair), pair.fingerprint());
            assert!(previous.is_none(), "rendered inputs must be unique");
        }
        let ts0: BTreeSet<String> = ts.iter().map(|e| e.pair.fingerprint()).collect();
        let hs_fps: BTreeSet<String> = hs.iter().map(|e| e.pair.fingerprint()).collect();
        let ds0: BTreeSet<String> = ds.iter().map(|p| p.fingerprint()).collect();
        let hs_inputs: BTreeSet<String> = hs.iter().map(|e| render_input(&e.pair)).collect();

        let splits = DatasetSplits { ts, ds, hs };
        let trace = RefCell::new(Trace::default());
        let mut clf = Instrumented {
            inner: default_registry().create("reference", 4242).unwrap(),
            trace: &trace,
            batches_since_fit: Cell::new(0),
        };
        let cfg = BootstrapConfig {
            k,
            max_sweeps: None,
            rng_seed: 4242,
            render_format: RENDER_FORMAT_V1.to_string(),
            drain_predicted_label: false,
        };
        let run = bootstrap_run(splits, &mut clf, &cfg).unwrap();

        assert!(matches!(run.status, BootstrapStatus::PoolExhausted));
        assert_eq!(run.history.len(), 23, "700 = 23 * 30 + 10 full sweeps");
        assert_eq!(run.final_ts.len(), 990);

        let trace = trace.borrow();
        assert_eq!(trace.fits.len(), 23);
        assert_eq!(trace.batches.len(), 46, "pool batch + held-out batch per sweep");

        let mut promoted_so_far: BTreeSet<String> = BTreeSet::new();
        for (sweep, record) in run.history.iter().enumerate() {
            assert_eq!(record.sweep, sweep);
            let pool_batch = &trace.batches[2 * sweep];
            let hs_batch = &trace.batches[2 * sweep + 1];
            assert_eq!(pool_batch.fit_index, sweep);
            assert!(pool_batch.first_after_fit);
            assert_eq!(hs_batch.fit_index, sweep);
            assert!(!hs_batch.first_after_fit);
            let hs_batch_set: BTreeSet<String> = hs_batch.inputs.iter().cloned().collect();
            assert_eq!(hs_batch_set, hs_inputs, "second batch of a sweep is the held-out set");

            // Pairwise-disjoint working sets, checked at every sweep.
            let ts_fps = &trace.fits[sweep];
            let ds_fps: BTreeSet<String> = pool_batch
                .inputs
                .iter()
                .map(|input| by_input[input].clone())
                .collect();
            assert_eq!(ds_fps.len(), pool_batch.inputs.len());
            assert!(ts_fps.is_disjoint(&ds_fps), "sweep {sweep}: TS overlaps DS");
            assert!(ts_fps.is_disjoint(&hs_fps), "sweep {sweep}: TS overlaps HS");
            assert!(ds_fps.is_disjoint(&hs_fps), "sweep {sweep}: DS overlaps HS");

            // Promotion budget: top k per predicted label, bounded by how
            // many pool items carried that prediction.
            let mut predicted = [0usize; 3];
            for label in &pool_batch.argmax {
                predicted[label.as_index()] += 1;
            }
            let mut expected_added = 0usize;
            for label in Label::ALL {
                let want = k.min(predicted[label.as_index()]);
                let got = record.added_for(label).count();
                assert_eq!(
                    got, want,
                    "sweep {sweep}: label {} promotions",
                    label.as_u8()
                );
                expected_added += want;
            }
            assert_eq!(record.added.len(), expected_added);

            // Training set growth: next fit sees exactly the promotions.
            let next_size = if sweep + 1 < trace.fits.len() {
                trace.fits[sweep + 1].len()
            } else {
                run.final_ts.len()
            };
            assert_eq!(next_size, ts_fps.len() + expected_added);
            let added_fps: BTreeSet<String> =
                record.added.iter().map(|a| a.pair.fingerprint()).collect();
            assert_eq!(added_fps.len(), record.added.len());
            assert!(added_fps.is_subset(&ds_fps), "sweep {sweep}: promoted from outside DS");
            assert!(added_fps.is_subset(&ds0), "sweep {sweep}: promotion not in the original pool");
            assert!(added_fps.is_disjoint(&ts0), "sweep {sweep}: promotion was a seed example");
            assert!(added_fps.is_disjoint(&hs_fps), "sweep {sweep}: promotion was held out");
            for fp in &added_fps {
                assert!(promoted_so_far.insert(fp.clone()), "{fp} promoted twice");
            }
            if sweep + 1 < trace.fits.len() {
                let expected_next: BTreeSet<String> =
                    ts_fps.union(&added_fps).cloned().collect();
                assert_eq!(&trace.fits[sweep + 1], &expected_next);
            }
        }

        // Held-out fingerprints never reach a fit call.
        for (i, fit) in trace.fits.iter().enumerate() {
            assert!(fit.is_disjoint(&hs_fps), "fit {i} saw held-out data");
        }
        assert_eq!(trace.fits[0], ts0);
        Some(format!("{} sweeps, final TS {}", run.history.len(), run.final_ts.len()))
    });
}

/// Seed-visible and pool-only halves of each class vocabulary.
const SEED_BANKS: [[&str; 4]; 3] = [
    ["river", "delta", "estuary", "marsh"],
    ["sonata", "allegro", "cadenza", "octave"],
    ["quark", "lepton", "boson", "hadron"],
];
const HIDDEN_BANKS: [[&str; 4]; 3] = [
    ["glacier", "fjord", "moraine", "crevasse"],
    ["aria", "libretto", "overture", "encore"],
    ["neutrino", "positron", "tachyon", "graviton"],
];

#[test]
fn criterion_05_bootstrap_gain() {
    criterion(5, "bootstrap gain", Some(Duration::from_secs(60)), || {
        let mk = |term: String, first: String, second: String| DefinitionPair {
            term,
            first: Definition {
                text: first,
                timestamp: Utc.with_ymd_and_hms(2008, 6, 1, 0, 0, 0).unwrap(),
                revision_id: 1,
            },
            second: Definition {
                text: second,
                timestamp: Utc.with_ymd_and_hms(2014, 6, 1, 0, 0, 0).unwrap(),
                revision_id: 2,
            },
        };
        let mut ts = Vec::new();
        let mut ds = Vec::new();
        let mut hs = Vec::new();
        for class in 0..3 {
            let seed = &SEED_BANKS[class];
            let hidden = &HIDDEN_BANKS[class];
            let s = |i: usize| seed[i % seed.len()];
            let h = |i: usize| hidden[i % hidden.len()];
            // Seed examples use only the seed half of the vocabulary.
            for i in 0..20 {
                ts.push(labeled(
                    mk(
                        format!("a{class}-{i}"),
                        format!("{} {} {}.", s(i), s(i + 1), s(i + 2)),
                        format!("{} {} {}.", s(i + 3), s(i), s(i + 1)),
                    ),
                    class,
                ));
            }
            // Pool items mix both halves, so promoting them teaches the
            // hidden words by association.
            for i in 0..40 {
                ds.push(mk(
                    format!("p{class}-{i}"),
                    format!("{} {} {} {}.", s(i), h(i), s(i + 1), h(i + 1)),
                    format!("{} {} {} {}.", h(i + 2), s(i + 2), h(i + 3), s(i + 3)),
                ));
            }
            // Held out: half seed-only (answerable from sweep 0), half
            // hidden-only (answerable only after bootstrapping).
            for i in 0..10 {
                hs.push(labeled(
                    mk(
                        format!("ha{class}-{i}"),
                        format!("{} {} {}.", s(i), s(i + 2), s(i + 1)),
                        format!("{} {} {}.", s(i + 1), s(i + 3), s(i)),
                    ),
                    class,
                ));
                hs.push(labeled(
                    mk(
                        format!("hb{class}-{i}"),
                        format!("{} {} {}.", h(i), h(i + 1), h(i + 2)),
                        format!("{} {} {}.", h(i + 3), h(i), h(i + 1)),
                    ),
                    class,
                ));
            }
        }
        assert_eq!((ts.len(), ds.len(), hs.len()), (60, 120, 60));

        let splits = DatasetSplits { ts, ds, hs };
        let mut clf = default_registry().create("reference", 99).unwrap();
        let cfg = BootstrapConfig {
            k: 5,
            max_sweeps: None,
            rng_seed: 99,
            render_format: RENDER_FORMAT_V1.to_string(),
            drain_predicted_label: false,
        };
        let run = bootstrap_run(splits, clf.as_mut(), &cfg).unwrap();
        assert!(run.history.len() >= 2, "need at least two sweeps to compare");
        let first = run.history.first().unwrap().hs_metrics.macro_avg.f1;
        let last = run.history.last().unwrap().hs_metrics.macro_avg.f1;
        assert!(
            last >= first + 0.02,
            "macro F1 did not improve by 2 points: sweep 0 {first:.4}, final {last:.4}"
        );
        Some(format!(
            "macro F1 {:.4} -> {:.4} over {} sweeps",
            first,
            last,
            run.history.len()
        ))
    });
}

/// Brute-force metrics from raw counts, restating the scoring conventions:
/// 0/0 ratios are 0, F1 is 0 when precision + recall is 0, macro is the
/// unweighted mean.
fn metrics_oracle(gold: &[Label], predicted: &[Label]) -> MetricsReport {
    let mut counts = [[0u64; 3]; 3];
    for (g, p) in gold.iter().zip(predicted) {
        counts[g.as_index()][p.as_index()] += 1;
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let mut per_label = [wikitide::eval::LabelMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    }; 3];
    for l in 0..3 {
        let tp = counts[l][l] as f64;
        let gold_total: u64 = counts[l].iter().sum();
        let pred_total: u64 = (0..3).map(|g| counts[g][l]).sum();
        let precision = ratio(tp, pred_total as f64);
        let recall = ratio(tp, gold_total as f64);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_label[l] = wikitide::eval::LabelMetrics {
            precision,
            recall,
            f1,
        };
    }
    let mean = |f: fn(&wikitide::eval::LabelMetrics) -> f64| {
        per_label.iter().map(f).sum::<f64>() / 3.0
    };
    let correct: u64 = (0..3).map(|l| counts[l][l]).sum();
    MetricsReport {
        per_label,
        macro_avg: wikitide::eval::LabelMetrics {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        },
        accuracy: correct as f64 / gold.len() as f64,
    }
}

fn assert_reports_close(got: &MetricsReport, want: &MetricsReport, context: &str) {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for l in 0..3 {
        assert!(
            close(got.per_label[l].precision, want.per_label[l].precision)
                && close(got.per_label[l].recall, want.per_label[l].recall)
                && close(got.per_label[l].f1, want.per_label[l].f1),
            "{context}: label {l} metrics diverge"
        );
    }
    assert!(close(got.macro_avg.precision, want.macro_avg.precision));
    assert!(close(got.macro_avg.recall, want.macro_avg.recall));
    assert!(close(got.macro_avg.f1, want.macro_avg.f1));
    assert!(close(got.accuracy, want.accuracy), "{context}: accuracy diverges");
}

#[test]
fn criterion_06_metrics_oracle() {
    criterion(6, "metrics oracle", Some(Duration::from_secs(10)), || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
        let random_labels = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Label> {
            (0..n)
                .map(|_| Label::from_u8(rng.random_range(0..3u8)).unwrap())
                .collect()
        };
        for trial in 0..1000 {
            let n = rng.random_range(1..=60usize);
            let gold = random_labels(&mut rng, n);
            let predicted = random_labels(&mut rng, n);
            let got = compute_metrics(&gold, &predicted).unwrap();
            let want = metrics_oracle(&gold, &predicted);
            assert_reports_close(&got, &want, &format!("trial {trial}"));
        }

        // Hand-checked case.
        let gold = [
            Label::Same,
            Label::NonFundamental,
            Label::Fundamental,
            Label::Fundamental,
        ];
        let predicted = [
            Label::Same,
            Label::NonFundamental,
            Label::NonFundamental,
            Label::Fundamental,
        ];
        let report = compute_metrics(&gold, &predicted).unwrap();
        assert!((report.per_label[2].f1 - 0.6667).abs() <= 1e-4);
        assert_eq!(report.accuracy, 0.75);
        None
    });
}

#[test]
fn criterion_07_drift() {
    criterion(7, "drift", Some(Duration::from_secs(10)), || {
        // Random vectors against the direct formula.
        let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
        for trial in 0..1000 {
            let dim = rng.random_range(1..=16usize);
            let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
            };
            let u = draw(&mut rng);
            let v = draw(&mut rng);
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
            let (nu, nv) = (norm(&u), norm(&v));
            if nu == 0.0 || nv == 0.0 {
                continue;
            }
            let got = cosine_distance(&u, &v).unwrap();
            assert!(!got.degenerate);
            let want = 1.0 - dot / (nu * nv);
            assert!(
                (got.value - want).abs() <= 1e-9,
                "trial {trial}: got {} want {want}",
                got.value
            );
        }
        let zero = cosine_distance(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert!(zero.degenerate);
        assert_eq!(zero.value, 1.0);

        // A history whose promoted fundamental-change pairs grow apart
        // sweep over sweep must produce a strictly increasing series.
        let mut history = Vec::new();
        let mut embeddings: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let placeholder_metrics = compute_metrics(&[Label::Same], &[Label::Same]).unwrap();
        let mk_pair = |term: String, first: String, second: String| DefinitionPair {
            term,
            first: Definition {
                text: first,
                timestamp: Utc.with_ymd_and_hms(2009, 2, 3, 4, 5, 6).unwrap(),
                revision_id: 1,
            },
            second: Definition {
                text: second,
                timestamp: Utc.with_ymd_and_hms(2018, 7, 8, 9, 10, 11).unwrap(),
                revision_id: 2,
            },
        };
        for sweep in 0..5usize {
            let angle = 0.15 + 0.25 * sweep as f64;
            let mut added = Vec::new();
            for j in 0..2usize {
                let first = format!("anchor text {sweep} {j}");
                let second = format!("moved text {sweep} {j}");
                embeddings.insert(first.clone(), vec![1.0, 0.0]);
                embeddings.insert(second.clone(), vec![angle.cos(), angle.sin()]);
                added.push(PseudoExample {
                    pair: mk_pair(format!("d{sweep}-{j}"), first, second),
                    label: Label::Fundamental,
                    confidence: 0.9,
                });
            }
            // A non-fundamental promotion with no registered embedding: the
            // series must never look at it.
            added.push(PseudoExample {
                pair: mk_pair(
                    format!("n{sweep}"),
                    format!("unused first {sweep}"),
                    format!("unused second {sweep}"),
                ),
                label: Label::NonFundamental,
                confidence: 0.8,
            });
            history.push(IterationRecord {
                sweep,
                added,
                hs_metrics: placeholder_metrics,
            });
        }
        // A final sweep that promoted nothing fundamental is omitted.
        history.push(IterationRecord {
            sweep: 5,
            added: vec![],
            hs_metrics: placeholder_metrics,
        });

        let embedder = move |text: &str| -> Vec<f64> {
            embeddings
                .get(text)
                .unwrap_or_else(|| panic!("embedded a text outside the fundamental additions: {text:?}"))
                .clone()
        };
        let series = drift_series(&history, &embedder);
        let sweeps: Vec<usize> = series.per_sweep.iter().map(|p| p.sweep).collect();
        assert_eq!(sweeps, vec![0, 1, 2, 3, 4]);
        for window in series.per_sweep.windows(2) {
            assert!(
                window[1].mean_distance > window[0].mean_distance,
                "drift not strictly increasing: {:?}",
                series.per_sweep
            );
        }
        for (i, point) in series.per_sweep.iter().enumerate() {
            let angle = 0.15 + 0.25 * i as f64;
            assert!((point.mean_distance - (1.0 - angle.cos())).abs() <= 1e-9);
        }
        None
    });
}

#[test]
fn criterion_08_render_golden() {
    criterion(8, "render golden bytes", Some(Duration::from_secs(5)), || {
        assert_eq!(RENDER_FORMAT_V1, "t-y-v1");
        let mk = |term: &str,
                  t1: (i32, u32, u32, u32, u32, u32),
                  d1: &str,
                  t2: (i32, u32, u32, u32, u32, u32),
                  d2: &str| DefinitionPair {
            term: term.to_string(),
            first: Definition {
                text: d1.to_string(),
                timestamp: Utc.with_ymd_and_hms(t1.0, t1.1, t1.2, t1.3, t1.4, t1.5).unwrap(),
                revision_id: 100,
            },
            second: Definition {
                text: d2.to_string(),
                timestamp: Utc.with_ymd_and_hms(t2.0, t2.1, t2.2, t2.3, t2.4, t2.5).unwrap(),
                revision_id: 200,
            },
        };
        let cases: [(DefinitionPair, &str); 10] = [
            (
                mk(
                    "Oak",
                    (2004, 4, 27, 2, 34, 0),
                    "An oak is a tree in the beech family.",
                    (2020, 3, 22, 12, 59, 59),
                    "An oak is a hardwood tree or shrub in the beech family.",
                ),
                "<t> Oak </t> <y> 2004-04-27T02:34:00Z </y> An oak is a tree in the beech family. <y> 2020-03-22T12:59:59Z </y> An oak is a hardwood tree or shrub in the beech family.",
            ),
            (
                mk(
                    "Ångström",
                    (1999, 12, 31, 23, 59, 59),
                    "The ångström is a unit of length equal to 0.1 nanometres.",
                    (2013, 6, 1, 0, 0, 0),
                    "The ångström is a metric unit of length equal to one ten-billionth of a metre.",
                ),
                "<t> Ångström </t> <y> 1999-12-31T23:59:59Z </y> The ångström is a unit of length equal to 0.1 nanometres. <y> 2013-06-01T00:00:00Z </y> The ångström is a metric unit of length equal to one ten-billionth of a metre.",
            ),
            (
                mk(
                    "Bluetooth",
                    (2002, 8, 15, 9, 5, 30),
                    "Bluetooth is a proprietary open wireless technology standard for exchanging data over short distances.",
                    (2021, 11, 3, 18, 20, 0),
                    "Bluetooth is a short-range wireless technology standard for exchanging data between fixed and mobile devices.",
                ),
                "<t> Bluetooth </t> <y> 2002-08-15T09:05:30Z </y> Bluetooth is a proprietary open wireless technology standard for exchanging data over short distances. <y> 2021-11-03T18:20:00Z </y> Bluetooth is a short-range wireless technology standard for exchanging data between fixed and mobile devices.",
            ),
            (
                mk(
                    "Meridian Hall",
                    (2008, 2, 29, 12, 0, 0),
                    "Meridian Hall is a theatre in Toronto.",
                    (2019, 9, 10, 7, 45, 12),
                    "Meridian Hall is a performing arts venue in downtown Toronto, Ontario.",
                ),
                "<t> Meridian Hall </t> <y> 2008-02-29T12:00:00Z </y> Meridian Hall is a theatre in Toronto. <y> 2019-09-10T07:45:12Z </y> Meridian Hall is a performing arts venue in downtown Toronto, Ontario.",
            ),
            (
                mk(
                    "Sputnik 1",
                    (2001, 10, 4, 5, 6, 7),
                    "Sputnik 1 was the first artificial Earth satellite.",
                    (2016, 4, 12, 21, 30, 45),
                    "Sputnik 1 was the first artificial Earth satellite, launched by the Soviet Union in 1957.",
                ),
                "<t> Sputnik 1 </t> <y> 2001-10-04T05:06:07Z </y> Sputnik 1 was the first artificial Earth satellite. <y> 2016-04-12T21:30:45Z </y> Sputnik 1 was the first artificial Earth satellite, launched by the Soviet Union in 1957.",
            ),
            (
                mk(
                    "Kindle",
                    (2007, 11, 19, 0, 0, 0),
                    "The Kindle is an e-book reader developed by Amazon.com.",
                    (2023, 5, 17, 14, 2, 59),
                    "The Kindle is a series of e-readers designed and marketed by Amazon.",
                ),
                "<t> Kindle </t> <y> 2007-11-19T00:00:00Z </y> The Kindle is an e-book reader developed by Amazon.com. <y> 2023-05-17T14:02:59Z </y> The Kindle is a series of e-readers designed and marketed by Amazon.",
            ),
            (
                mk(
                    "Morse code",
                    (2003, 1, 1, 1, 2, 3),
                    "Morse code is a method of transmitting text as a series of on-off tones.",
                    (2018, 12, 25, 23, 0, 0),
                    "Morse code is a telecommunications method which encodes text characters as sequences of two different signal durations.",
                ),
                "<t> Morse code </t> <y> 2003-01-01T01:02:03Z </y> Morse code is a method of transmitting text as a series of on-off tones. <y> 2018-12-25T23:00:00Z </y> Morse code is a telecommunications method which encodes text characters as sequences of two different signal durations.",
            ),
            (
                mk(
                    "Ore",
                    (2005, 7, 7, 7, 7, 7),
                    "Ore is rock that contains minerals.",
                    (2022, 2, 22, 22, 22, 22),
                    "Ore is natural rock or sediment that contains one or more valuable minerals.",
                ),
                "<t> Ore </t> <y> 2005-07-07T07:07:07Z </y> Ore is rock that contains minerals. <y> 2022-02-22T22:22:22Z </y> Ore is natural rock or sediment that contains one or more valuable minerals.",
            ),
            (
                mk(
                    "Café wall illusion",
                    (2009, 3, 30, 16, 40, 5),
                    "The café wall illusion is a geometrical-optical illusion.",
                    (2024, 1, 8, 3, 59, 58),
                    "The café wall illusion is an optical illusion in which parallel straight lines appear to be sloped.",
                ),
                "<t> Café wall illusion </t> <y> 2009-03-30T16:40:05Z </y> The café wall illusion is a geometrical-optical illusion. <y> 2024-01-08T03:59:58Z </y> The café wall illusion is an optical illusion in which parallel straight lines appear to be sloped.",
            ),
            (
                mk(
                    "Zugzwang",
                    (2006, 5, 20, 10, 11, 12),
                    "Zugzwang is a situation in chess where a player is forced to make a move.",
                    (2017, 8, 2, 19, 26, 33),
                    "Zugzwang is a situation found in chess and other turn-based games wherein one player must move to their own disadvantage.",
                ),
                "<t> Zugzwang </t> <y> 2006-05-20T10:11:12Z </y> Zugzwang is a situation in chess where a player is forced to make a move. <y> 2017-08-02T19:26:33Z </y> Zugzwang is a situation found in chess and other turn-based games wherein one player must move to their own disadvantage.",
            ),
        ];
        for (i, (pair, expected)) in cases.iter().enumerate() {
            let rendered = render_input(pair);
            assert_eq!(
                rendered.as_bytes(),
                expected.as_bytes(),
                "golden mismatch on fixture pair {i}"
            );
        }
        None
    });
}

#[test]
fn criterion_09_wictsv_projection() {
    criterion(9, "target sense verification", Some(Duration::from_secs(10)), || {
        // Three-class to binary projection: only "same" verifies the sense.
        assert!(project_label(Label::Same).value);
        assert!(!project_label(Label::NonFundamental).value);
        assert!(!project_label(Label::Fundamental).value);

        // Always-true baseline: accuracy is the positive rate p, F1 is
        // 2p / (p + 1).
        let mut rng = ChaCha8Rng::seed_from_u64(0xC9);
        for trial in 0..200 {
            let n = rng.random_range(1..=80usize);
            let instances: Vec<WicTsvInstance> = (0..n)
                .map(|i| WicTsvInstance {
                    id: i,
                    target: format!("w{i}"),
                    target_index: 0,
                    context: format!("w{i} appears in this sentence"),
                    definition: "a thing of some kind".to_string(),
                    gold: Some(rng.random_bool(0.5)),
                })
                .collect();
            let positives = instances
                .iter()
                .filter(|inst| inst.gold == Some(true))
                .count() as f64;
            let rate = positives / n as f64;
            let baseline = all_true_baseline(&instances).unwrap();
            assert!(
                (baseline.accuracy - rate).abs() <= 1e-9,
                "trial {trial}: accuracy"
            );
            let want_f1 = if positives == 0.0 {
                0.0
            } else {
                2.0 * rate / (rate + 1.0)
            };
            assert!((baseline.f1 - want_f1).abs() <= 1e-9, "trial {trial}: F1");
        }

        // Published test split, when present locally.
        let note = match std::env::var_os("WICTSV_DATA_DIR") {
            Some(dir) => {
                let dir = PathBuf::from(dir);
                let instances = load_wictsv(
                    &dir.join("test_examples.txt"),
                    &dir.join("test_definitions.txt"),
                    Some(&dir.join("test_labels.txt")),
                )
                .unwrap();
                assert!(instances.iter().all(|inst| inst.gold.is_some()));
                let score = all_true_baseline(&instances).unwrap();
                assert!(
                    (score.accuracy - 0.508).abs() <= 0.005,
                    "published-gold baseline accuracy {:.4} not within 0.5 points of 0.508",
                    score.accuracy
                );
                assert!(
                    (score.f1 - 0.673).abs() <= 0.005,
                    "published-gold baseline F1 {:.4} not within 0.5 points of 0.673",
                    score.f1
                );
                format!(
                    "published gold: accuracy {:.3}, F1 {:.3}",
                    score.accuracy, score.f1
                )
            }
            None => "WICTSV_DATA_DIR unset; published-gold check skipped, formula checks run".to_string(),
        };
        Some(note)
    });
}

/// Relative path -> file bytes for every file under `root`.
fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_10_pipeline_smoke() {
    criterion(10, "pipeline smoke", Some(Duration::from_secs(120)), || {
        let bin = env!("CARGO_BIN_EXE_wikitide");
        let config = smoke_fixture("pipeline_scripted.toml");
        let run_chain = |workdir: &Path| {
            for step in ["harvest", "annotate", "split", "bootstrap", "report"] {
                let output = Command::new(bin)
                    .arg("--config")
                    .arg(&config)
                    .arg("--workspace")
                    .arg(workdir)
                    .arg(step)
                    .output()
                    .unwrap();
                assert!(
                    output.status.success(),
                    "step {step} failed:\n{}",
                    String::from_utf8_lossy(&output.stderr)
                );
            }
        };
        let first = tempfile::tempdir().unwrap();
        let second = tempfile::tempdir().unwrap();
        run_chain(first.path());
        run_chain(second.path());

        let a = tree_bytes(first.path());
        let b = tree_bytes(second.path());
        let a_names: Vec<&String> = a.keys().collect();
        let b_names: Vec<&String> = b.keys().collect();
        assert_eq!(a_names, b_names, "the two runs produced different file sets");
        assert!(!a.is_empty(), "pipeline produced no artifacts");
        for (name, bytes) in &a {
            assert_eq!(
                Some(bytes),
                b.get(name),
                "artifact {name} differs between identically seeded runs"
            );
        }
        Some(format!("{} artifacts byte-identical across runs", a.len()))
    });
}
