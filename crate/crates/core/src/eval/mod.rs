//! Per-label and macro precision/recall/F1, best-sweep selection, and the
//! label-2 semantic drift series, plus the deterministic TF-IDF embedder
//! that backs drift when no external encoder is plugged in.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::Label;
use crate::bootstrap::IterationRecord;
use crate::textutil::word_tokens;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold has {gold} labels but predictions have {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("cannot score an empty label vector")]
    EmptyInput,
    #[error("vectors have dimensions {left} and {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no sweeps recorded")]
    EmptyHistory,
    #[error("embedder needs a non-empty corpus")]
    EmptyCorpus,
}

/// 3x3 count grid indexed (gold, predicted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_pairs(gold: &[Label], predicted: &[Label]) -> Result<Self, EvalError> {
        if gold.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        if gold.is_empty() {
            return Err(EvalError::EmptyInput);
        }
        let mut matrix = ConfusionMatrix::default();
        for (&g, &p) in gold.iter().zip(predicted) {
            matrix.counts[g.as_index()][p.as_index()] += 1;
        }
        Ok(matrix)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Precision, recall, F1 per label and their unweighted means, with the
    /// 0/0 -> 0 convention throughout.
    pub fn metrics(&self) -> MetricsReport {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut per_label = [LabelMetrics::default(); 3];
        for (l, slot) in per_label.iter_mut().enumerate() {
            let tp = self.counts[l][l];
            let predicted: u64 = (0..3).map(|g| self.counts[g][l]).sum();
            let gold: u64 = (0..3).map(|p| self.counts[l][p]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, gold);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            *slot = LabelMetrics {
                precision,
                recall,
                f1,
            };
        }
        let mean = |f: fn(&LabelMetrics) -> f64| per_label.iter().map(f).sum::<f64>() / 3.0;
        let correct: u64 = (0..3).map(|l| self.counts[l][l]).sum();
        MetricsReport {
            per_label,
            macro_avg: LabelMetrics {
                precision: mean(|m| m.precision),
                recall: mean(|m| m.recall),
                f1: mean(|m| m.f1),
            },
            accuracy: ratio(correct, self.total()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Scores for one evaluation: per-label values indexed by label, their
/// unweighted means, and exact-match accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_label: [LabelMetrics; 3],
    #[serde(rename = "macro")]
    pub macro_avg: LabelMetrics,
    pub accuracy: f64,
}

/// Scores `predicted` against `gold` over the three labels.
pub fn compute_metrics(gold: &[Label], predicted: &[Label]) -> Result<MetricsReport, EvalError> {
    Ok(ConfusionMatrix::from_pairs(gold, predicted)?.metrics())
}

/// The sweep index with the highest held-out macro F1; ties go to the
/// earliest sweep.
pub fn best_iteration(history: &[IterationRecord]) -> Result<usize, EvalError> {
    let mut best: Option<(usize, f64)> = None;
    for record in history {
        let f1 = record.hs_metrics.macro_avg.f1;
        if best.is_none_or(|(_, best_f1)| f1 > best_f1) {
            best = Some((record.sweep, f1));
        }
    }
    best.map(|(sweep, _)| sweep).ok_or(EvalError::EmptyHistory)
}

/// Cosine distance in [0, 2]. `degenerate` marks the zero-vector convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineDistance {
    pub value: f64,
    pub degenerate: bool,
}

/// 1 - cos(u, v). A zero vector on either side yields distance 1 by
/// convention, flagged as degenerate.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<CosineDistance, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let norm_u = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let norm_v = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm_u == 0.0 || norm_v == 0.0 {
        return Ok(CosineDistance {
            value: 1.0,
            degenerate: true,
        });
    }
    Ok(CosineDistance {
        value: 1.0 - dot / (norm_u * norm_v),
        degenerate: false,
    })
}

/// Text-to-vector hook for drift. Implemented by [`TfIdfEmbedder`] and by
/// any plain closure, so neural encoders can be swapped in.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
}

impl<F: Fn(&str) -> Vec<f64>> Embedder for F {
    fn embed(&self, text: &str) -> Vec<f64> {
        self(text)
    }
}

/// One drift observation: the mean definition distance over the label-2
/// pairs a sweep added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPoint {
    pub sweep: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftSeries {
    pub per_sweep: Vec<DriftPoint>,
}

/// Mean cosine distance between the two definitions of each sweep's newly
/// added label-2 pairs. Sweeps that added none are omitted.
pub fn drift_series(history: &[IterationRecord], embedder: &dyn Embedder) -> DriftSeries {
    let mut series = DriftSeries::default();
    for record in history {
        let mut sum = 0.0;
        let mut count = 0usize;
        for added in &record.added {
            if added.label != Label::Fundamental {
                continue;
            }
            let u = embedder.embed(&added.pair.first.text);
            let v = embedder.embed(&added.pair.second.text);
            let distance = cosine_distance(&u, &v).expect("embedder emits a fixed dimension");
            sum += distance.value;
            count += 1;
        }
        if count > 0 {
            series.per_sweep.push(DriftPoint {
                sweep: record.sweep,
                mean_distance: sum / count as f64,
            });
        }
    }
    series
}

/// Deterministic TF-IDF vectors over a fixed corpus vocabulary. IDF is
/// smoothed (ln((1+n)/(1+df)) + 1) so every seen token keeps positive
/// weight and identical documents embed identically.
#[derive(Debug, Clone)]
pub struct TfIdfEmbedder {
    vocab: BTreeMap<String, usize>,
    idf: Vec<f64>,
}

impl TfIdfEmbedder {
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

impl Embedder for TfIdfEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.vocab.len()];
        for token in word_tokens(text) {
            if let Some(&idx) = self.vocab.get(&token) {
                vector[idx] += self.idf[idx];
            }
        }
        vector
    }
}

/// Builds the default embedder from a corpus of texts.
pub fn default_embedder<S: AsRef<str>>(corpus: &[S]) -> Result<TfIdfEmbedder, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, u64> = BTreeMap::new();
    for doc in corpus {
        let distinct: BTreeSet<String> = word_tokens(doc.as_ref()).into_iter().collect();
        for token in distinct {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let n = corpus.len() as f64;
    let mut vocab = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    for (rank, (token, count)) in df.into_iter().enumerate() {
        vocab.insert(token, rank);
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
    }
    Ok(TfIdfEmbedder { vocab, idf })
}

fn fmt_cell(value: f64) -> String {
    format!("{value:.4}")
}

/// Aligned plain-text table: one row per label plus the unweighted mean,
/// accuracy underneath, and the best sweep when known.
pub fn report_table(report: &MetricsReport, best_sweep: Option<usize>) -> String {
    let mut rows = vec![format!(
        "{:<8}{:>11}{:>9}{:>9}",
        "label", "precision", "recall", "f1"
    )];
    for (l, metrics) in report.per_label.iter().enumerate() {
        rows.push(format!(
            "{:<8}{:>11}{:>9}{:>9}",
            l,
            fmt_cell(metrics.precision),
            fmt_cell(metrics.recall),
            fmt_cell(metrics.f1)
        ));
    }
    rows.push(format!(
        "{:<8}{:>11}{:>9}{:>9}",
        "avg",
        fmt_cell(report.macro_avg.precision),
        fmt_cell(report.macro_avg.recall),
        fmt_cell(report.macro_avg.f1)
    ));
    rows.push(format!("accuracy {}", fmt_cell(report.accuracy)));
    if let Some(sweep) = best_sweep {
        rows.push(format!("best sweep (BI) {sweep}"));
    }
    rows.push(String::new());
    rows.join("\n")
}

/// CSV export of a drift series: header plus one row per sweep.
pub fn drift_csv(series: &DriftSeries) -> String {
    let mut out = String::from("sweep,mean_distance\n");
    for point in &series.per_sweep {
        out.push_str(&format!("{},{:.6}\n", point.sweep, point.mean_distance));
    }
    out
}

/// Minimal self-contained SVG line chart of a drift series.
pub fn drift_svg(series: &DriftSeries) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const M: f64 = 50.0;
    let max_y = series
        .per_sweep
        .iter()
        .map(|p| p.mean_distance)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let max_x = series.per_sweep.iter().map(|p| p.sweep).max().unwrap_or(0) as f64;
    let sx = |sweep: f64| {
        if max_x == 0.0 {
            M + (W - 2.0 * M) / 2.0
        } else {
            M + sweep / max_x * (W - 2.0 * M)
        }
    };
    let sy = |d: f64| H - M - d / max_y * (H - 2.0 * M);
    let points: Vec<String> = series
        .per_sweep
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.sweep as f64), sy(p.mean_distance)))
        .collect();
    let mut svg = format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<line x1=\"{m}\" y1=\"{ybase}\" x2=\"{xend}\" y2=\"{ybase}\" stroke=\"black\"/>\n",
            "<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{ybase}\" stroke=\"black\"/>\n",
            "<text x=\"{xmid}\" y=\"{h2}\" text-anchor=\"middle\" font-size=\"12\">sweep</text>\n",
            "<text x=\"14\" y=\"{ymid}\" text-anchor=\"middle\" font-size=\"12\" ",
            "transform=\"rotate(-90 14 {ymid})\">mean cosine distance</text>\n",
            "<text x=\"{m}\" y=\"{h3}\" text-anchor=\"middle\" font-size=\"10\">0</text>\n",
            "<text x=\"{xend}\" y=\"{h3}\" text-anchor=\"middle\" font-size=\"10\">{xmaxl}</text>\n",
            "<text x=\"{m2}\" y=\"{m}\" text-anchor=\"end\" font-size=\"10\">{ymaxl:.3}</text>\n",
        ),
        w = W,
        h = H,
        m = M,
        ybase = H - M,
        xend = W - M,
        xmid = W / 2.0,
        h2 = H - 14.0,
        ymid = H / 2.0,
        h3 = H - M + 16.0,
        xmaxl = max_x as usize,
        m2 = M - 6.0,
        ymaxl = max_y,
    );
    if points.len() == 1 {
        svg.push_str(&format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"steelblue\"/>\n",
            points[0].split(',').next().unwrap(),
            points[0].split(',').nth(1).unwrap()
        ));
    } else if !points.is_empty() {
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
