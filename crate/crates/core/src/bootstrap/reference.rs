//! Built-in multinomial logistic regression over hashed word n-grams,
//! trained by seeded SGD. Deterministic, dependency-free, and fast enough
//! to run the full sweep loop inside a test.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::classifier::{Classifier, ClassifierError, TrainingExample};
use crate::textutil::{fnv1a64, word_tokens};

const DIM: usize = 1 << 16;
const EPOCHS: usize = 8;
const LEARNING_RATE: f64 = 0.5;

/// Sparse L2-normalized counts of hashed word unigrams and bigrams, plus a
/// constant bias feature at index DIM.
fn features(input: &str) -> Vec<(usize, f64)> {
    let tokens = word_tokens(input);
    let mut counts: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
    for token in &tokens {
        *counts.entry(fnv1a64(token.as_bytes()) as usize % DIM).or_insert(0.0) += 1.0;
    }
    for window in tokens.windows(2) {
        let bigram = format!("{}\x1f{}", window[0], window[1]);
        *counts.entry(fnv1a64(bigram.as_bytes()) as usize % DIM).or_insert(0.0) += 1.0;
    }
    let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut sparse: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(idx, count)| (idx, if norm > 0.0 { count / norm } else { 0.0 }))
        .collect();
    sparse.push((DIM, 1.0));
    sparse
}

fn softmax(scores: [f64; 3]) -> [f64; 3] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = scores.map(|s| (s - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

pub struct ReferenceClassifier {
    seed: u64,
    warm_start: bool,
    /// Row-major per class, DIM weights + bias.
    weights: Option<Vec<f64>>,
    fits: u64,
}

impl ReferenceClassifier {
    pub fn new(seed: u64) -> Self {
        ReferenceClassifier {
            seed,
            warm_start: false,
            weights: None,
            fits: 0,
        }
    }

    /// Carries weights across fits instead of reinitializing.
    pub fn with_warm_start(mut self, warm_start: bool) -> Self {
        self.warm_start = warm_start;
        self
    }

    /// Stable digest of the learned weights; None before the first fit.
    pub fn weight_fingerprint(&self) -> Option<String> {
        self.weights.as_ref().map(|weights| {
            let mut bytes = Vec::with_capacity(weights.len() * 8);
            for w in weights {
                bytes.extend_from_slice(&w.to_le_bytes());
            }
            format!("{:016x}", fnv1a64(&bytes))
        })
    }

    fn scores(weights: &[f64], sparse: &[(usize, f64)]) -> [f64; 3] {
        let mut scores = [0.0f64; 3];
        for (class, score) in scores.iter_mut().enumerate() {
            let row = &weights[class * (DIM + 1)..(class + 1) * (DIM + 1)];
            *score = sparse.iter().map(|&(idx, value)| row[idx] * value).sum();
        }
        scores
    }
}

impl Classifier for ReferenceClassifier {
    fn fit(&mut self, examples: &[TrainingExample]) -> Result<(), ClassifierError> {
        if examples.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        // Epoch order is a pure function of (seed, fit count), so reruns
        // reproduce identical weights while successive sweeps still see
        // fresh shuffles.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(self.fits));
        self.fits += 1;
        if !self.warm_start || self.weights.is_none() {
            self.weights = Some(vec![0.0; 3 * (DIM + 1)]);
        }
        let weights = self.weights.as_mut().expect("weights initialized above");

        let prepared: Vec<(Vec<(usize, f64)>, usize)> = examples
            .iter()
            .map(|ex| (features(&ex.input), ex.label.as_index()))
            .collect();
        let mut order: Vec<usize> = (0..prepared.len()).collect();
        for _ in 0..EPOCHS {
            order.shuffle(&mut rng);
            for &i in &order {
                let (sparse, gold) = &prepared[i];
                let probs = softmax(Self::scores(weights, sparse));
                for (class, &p) in probs.iter().enumerate() {
                    let gradient = p - if class == *gold { 1.0 } else { 0.0 };
                    if gradient == 0.0 {
                        continue;
                    }
                    let row = &mut weights[class * (DIM + 1)..(class + 1) * (DIM + 1)];
                    for &(idx, value) in sparse {
                        row[idx] -= LEARNING_RATE * gradient * value;
                    }
                }
            }
        }
        Ok(())
    }

    fn predict_proba(&self, input: &str) -> Result<[f64; 3], ClassifierError> {
        let weights = self.weights.as_ref().ok_or(ClassifierError::NotFitted)?;
        Ok(softmax(Self::scores(weights, &features(input))))
    }
}
