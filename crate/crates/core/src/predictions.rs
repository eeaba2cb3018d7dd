//! Prediction sets and the top-label view used by every estimator.
//!
//! A [`PredictionSet`] holds an `n x k` score matrix (row-major) together with
//! integer labels. Scores are either raw logits or rows of the probability
//! simplex; [`PredictionSet::new`] enforces the invariants of each kind.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on a probability row sum.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub model_name: Option<String>,
    pub dataset_name: Option<String>,
}

/// Model output `f(X)` and labels `Y` for `n` examples over `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scores: Vec<f64>,
    k: usize,
    kind: ScoreKind,
    labels: Vec<usize>,
    example_ids: Option<Vec<String>>,
    pub metadata: Metadata,
}

impl PredictionSet {
    /// Validates raw arrays into a prediction set.
    ///
    /// Probability rows whose sum is off by at most [`SIMPLEX_TOLERANCE`] are
    /// renormalized; rows already within a few ulps of 1 are kept bit-for-bit
    /// so that serialization round trips are exact.
    pub fn new(scores: Vec<f64>, k: usize, kind: ScoreKind, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        if scores.len() != n * k {
            return Err(Error::ShapeMismatch {
                len: scores.len(),
                n,
                k,
            });
        }
        let mut scores = scores;
        for (row, chunk) in scores.chunks_mut(k).enumerate() {
            if chunk.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFiniteScore { row });
            }
            if kind == ScoreKind::Probabilities {
                normalize_probability_row(row, chunk)?;
            }
        }
        for (row, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange { row, label, k });
            }
        }
        Ok(Self {
            scores,
            k,
            kind,
            labels,
            example_ids: None,
            metadata: Metadata::default(),
        })
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>], kind: ScoreKind, labels: Vec<usize>) -> Result<Self> {
        let k = rows.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::ShapeMismatch {
                len: bad.len(),
                n: rows.len(),
                k,
            });
        }
        Self::new(rows.concat(), k, kind, labels)
    }

    pub fn with_example_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.len() {
            return Err(Error::IdCountMismatch(ids.len(), self.len()));
        }
        self.example_ids = Some(ids);
        Ok(self)
    }

    pub fn with_metadata(mut self, metadata: Metadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn example_ids(&self) -> Option<&[String]> {
        self.example_ids.as_deref()
    }

    /// Row-major score matrix.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.scores[j * self.k..(j + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.scores.chunks(self.k)
    }

    /// Examples at `indices`, in the given order. Ids and metadata carry over.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut scores = Vec::with_capacity(indices.len() * self.k);
        let mut labels = Vec::with_capacity(indices.len());
        for &j in indices {
            scores.extend_from_slice(self.row(j));
            labels.push(self.labels[j]);
        }
        let example_ids = self
            .example_ids
            .as_ref()
            .map(|ids| indices.iter().map(|&j| ids[j].clone()).collect());
        Ok(Self {
            scores,
            k: self.k,
            kind: self.kind,
            labels,
            example_ids,
            metadata: self.metadata.clone(),
        })
    }

    /// Replaces the score matrix, keeping labels, ids and metadata.
    pub(crate) fn with_scores(&self, scores: Vec<f64>, k: usize, kind: ScoreKind) -> Self {
        debug_assert_eq!(scores.len(), self.len() * k);
        Self {
            scores,
            k,
            kind,
            labels: self.labels.clone(),
            example_ids: self.example_ids.clone(),
            metadata: self.metadata.clone(),
        }
    }

    pub(crate) fn with_labels(mut self, labels: Vec<usize>) -> Self {
        debug_assert_eq!(labels.len(), self.len());
        self.labels = labels;
        self
    }
}

fn normalize_probability_row(row: usize, chunk: &mut [f64]) -> Result<()> {
    let sum: f64 = chunk.iter().sum();
    if chunk.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::NotNormalized { row, sum });
    }
    // rows already on the simplex up to rounding are left untouched
    if (sum - 1.0).abs() > 4.0 * chunk.len() as f64 * f64::EPSILON {
        for p in chunk.iter_mut() {
            *p /= sum;
        }
    }
    Ok(())
}

/// Numerically stable exponential normalization of one row of logits.
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Top-label confidence `C = max f(X)` and correctness `A = [Y in argmax f(X)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopLabelView {
    pub confidence: Vec<f64>,
    pub correct: Vec<bool>,
}

impl TopLabelView {
    pub fn new(confidence: Vec<f64>, correct: Vec<bool>) -> Result<Self> {
        if confidence.is_empty() {
            return Err(Error::EmptyInput);
        }
        if confidence.len() != correct.len() {
            return Err(Error::InvalidArgument(format!(
                "{} confidences but {} correctness flags",
                confidence.len(),
                correct.len()
            )));
        }
        if let Some(row) = confidence.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteScore { row });
        }
        Ok(Self {
            confidence,
            correct,
        })
    }

    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct.iter().filter(|&&a| a).count() as f64 / self.len() as f64
    }

    pub fn error_rate(&self) -> f64 {
        self.correct.iter().filter(|&&a| !a).count() as f64 / self.len() as f64
    }

    pub fn mean_confidence(&self) -> f64 {
        self.confidence.iter().sum::<f64>() / self.len() as f64
    }
}

/// Builds the top-label view; logits are normalized first.
///
/// A label that attains a shared maximum counts as correct.
pub fn top_label_view(preds: &PredictionSet) -> TopLabelView {
    let mut buf = vec![0.0; preds.num_classes()];
    let mut confidence = Vec::with_capacity(preds.len());
    let mut correct = Vec::with_capacity(preds.len());
    for (row, &label) in preds.rows().zip(preds.labels()) {
        let probs = match preds.kind() {
            ScoreKind::Probabilities => row,
            ScoreKind::Logits => {
                softmax_into(row, &mut buf);
                &buf[..]
            }
        };
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        confidence.push(max);
        correct.push(probs[label] == max);
    }
    TopLabelView {
        confidence,
        correct,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_well_formed_row() {
        let p = PredictionSet::from_rows(&[vec![0.7, 0.3]], ScoreKind::Probabilities, vec![0]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.num_classes(), 2);
    }

    #[test]
    fn rejects_unnormalized_row() {
        let err = PredictionSet::from_rows(&[vec![0.5, 0.6]], ScoreKind::Probabilities, vec![0]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { row: 0, .. }));
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = PredictionSet::from_rows(&[vec![0.7, 0.3]], ScoreKind::Probabilities, vec![5]).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { label: 5, k: 2, .. }));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let err = PredictionSet::from_rows(&[vec![f64::NAN, 0.0]], ScoreKind::Logits, vec![0]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteScore { row: 0 }));
        let err = PredictionSet::new(vec![], 2, ScoreKind::Logits, vec![]).unwrap_err();
        assert!(matches!(err, Error::EmptyInput));
        let err = PredictionSet::new(vec![1.0], 1, ScoreKind::Logits, vec![0]).unwrap_err();
        assert!(matches!(err, Error::TooFewClasses(1)));
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let p = PredictionSet::from_rows(&[vec![0.7, 0.3 + 5e-7]], ScoreKind::Probabilities, vec![0]).unwrap();
        let sum: f64 = p.row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        // an already-normalized row is untouched
        let p = PredictionSet::from_rows(&[vec![0.1, 0.2, 0.7]], ScoreKind::Probabilities, vec![0]).unwrap();
        assert_eq!(p.row(0), &[0.1, 0.2, 0.7]);
    }

    #[test]
    fn top_label_examples() {
        let p = PredictionSet::from_rows(
            &[vec![0.7, 0.2, 0.1], vec![0.7, 0.2, 0.1]],
            ScoreKind::Probabilities,
            vec![0, 2],
        )
        .unwrap();
        let v = top_label_view(&p);
        assert_eq!(v.confidence, vec![0.7, 0.7]);
        assert_eq!(v.correct, vec![true, false]);
    }

    #[test]
    fn shared_max_counts_as_correct() {
        let p = PredictionSet::from_rows(&[vec![0.5, 0.5]], ScoreKind::Probabilities, vec![1]).unwrap();
        let v = top_label_view(&p);
        assert_eq!(v.confidence, vec![0.5]);
        assert_eq!(v.correct, vec![true]);
    }

    #[test]
    fn logits_are_normalized_before_the_view() {
        let p = PredictionSet::from_rows(&[vec![2.0, 1.0]], ScoreKind::Logits, vec![1]).unwrap();
        let v = top_label_view(&p);
        let expected = 2f64.exp() / (2f64.exp() + 1f64.exp());
        assert!((v.confidence[0] - expected).abs() < 1e-15);
        assert!(!v.correct[0]);
    }
}
