//! Calibration error estimators, proper scoring rules and reliability data.

use serde::{Deserialize, Serialize};

use crate::binning::{assign_bins, bin_assign, bin_stats, equal_width_index, Bin, BinStats, BinningScheme, BinningSpec};
use crate::error::{Error, Result};
use crate::numeric::DoubleDouble;
use crate::predictions::{top_label_view, PredictionSet, TopLabelView};
use crate::recal::probabilities_of;

/// Probability floor applied before taking a log in [`nll`].
pub const NLL_CLAMP: f64 = 1e-12;

/// Per-bin norm applied to `accuracy(B_i) - confidence(B_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    /// Weighted mean of squared gaps (the squared estimator `S^2`).
    L2,
    /// Square root of the `L2` value (RMSCE).
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Max probability against `[label in argmax]`.
    TopLabel,
    /// Per-class binning of `p_c` against `[label == c]`, unweighted mean over classes.
    ClassWise,
    /// All `n * k` pairs `(p_c, [label == c])` pooled into one binned estimate.
    AllLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EceConfig {
    pub binning: BinningSpec,
    pub norm: Norm,
    pub aggregation: Aggregation,
    /// Bin count for the class-wise variant; the scheme follows `binning`.
    pub class_wise_bins: usize,
}

impl Default for EceConfig {
    fn default() -> Self {
        Self {
            binning: BinningSpec::default(),
            norm: Norm::L1,
            aggregation: Aggregation::TopLabel,
            class_wise_bins: 15,
        }
    }
}

impl EceConfig {
    pub fn top_label(binning: BinningSpec, norm: Norm) -> Self {
        Self {
            binning,
            norm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.binning.num_bins == 0 || self.class_wise_bins == 0 {
            return Err(Error::ZeroBins);
        }
        Ok(())
    }
}

/// Collapses bin statistics with the given norm. Empty bins contribute 0.
///
/// Sums of `count_i * |gap_i|` and `count_i * gap_i^2` are accumulated in
/// double-double precision and divided by `n` once, so RMS never falls below
/// l1 through rounding.
pub fn aggregate_bins(stats: &BinStats, norm: Norm) -> f64 {
    let mut total = DoubleDouble::default();
    for bin in stats.bins.iter().filter(|b| b.count > 0) {
        let gap = bin.mean_accuracy - bin.mean_confidence;
        match norm {
            Norm::L1 => total.add_scaled(bin.count, gap.abs()),
            Norm::L2 | Norm::Rms => total.add_scaled_square(bin.count, gap.abs()),
        }
    }
    let mean = total.div_count(stats.total);
    match norm {
        Norm::Rms => mean.sqrt(),
        Norm::L1 | Norm::L2 => mean.value(),
    }
}

fn binned_error(values: &[f64], outcomes: &[bool], spec: BinningSpec, norm: Norm) -> Result<f64> {
    let assignment = assign_bins(values, spec)?;
    Ok(aggregate_bins(&bin_stats(values, outcomes, &assignment, spec), norm))
}

/// Top-label binned estimator on an already extracted view.
pub fn ece_top_label(view: &TopLabelView, binning: BinningSpec, norm: Norm) -> Result<f64> {
    binned_error(&view.confidence, &view.correct, binning, norm)
}

/// Binned calibration error of `preds` for the configured variant.
pub fn ece(preds: &PredictionSet, cfg: &EceConfig) -> Result<f64> {
    cfg.validate()?;
    match cfg.aggregation {
        Aggregation::TopLabel => ece_top_label(&top_label_view(preds), cfg.binning, cfg.norm),
        Aggregation::ClassWise => {
            let probs = probabilities_of(preds);
            let k = probs.num_classes();
            let spec = BinningSpec::new(cfg.binning.scheme, cfg.class_wise_bins)?;
            let mut values = vec![0.0; probs.len()];
            let mut outcomes = vec![false; probs.len()];
            let mut total = 0.0;
            for class in 0..k {
                for (j, (row, &label)) in probs.rows().zip(probs.labels()).enumerate() {
                    values[j] = row[class];
                    outcomes[j] = label == class;
                }
                total += binned_error(&values, &outcomes, spec, cfg.norm)?;
            }
            Ok(total / k as f64)
        }
        Aggregation::AllLabel => {
            let probs = probabilities_of(preds);
            let k = probs.num_classes();
            let values = probs.scores().to_vec();
            let outcomes: Vec<bool> = probs
                .labels()
                .iter()
                .flat_map(|&label| (0..k).map(move |c| c == label))
                .collect();
            binned_error(&values, &outcomes, cfg.binning, cfg.norm)
        }
    }
}

/// Mean negative log-likelihood of the labels, with `p_label` clamped at [`NLL_CLAMP`].
pub fn nll(preds: &PredictionSet) -> f64 {
    let probs = probabilities_of(preds);
    let total: f64 = probs
        .rows()
        .zip(probs.labels())
        .map(|(row, &label)| -row[label].max(NLL_CLAMP).ln())
        .sum();
    total / probs.len() as f64
}

/// Multiclass Brier score: mean squared distance to the one-hot label, in `[0, 2]`.
pub fn brier(preds: &PredictionSet) -> f64 {
    let probs = probabilities_of(preds);
    let total: f64 = probs
        .rows()
        .zip(probs.labels())
        .map(|(row, &label)| {
            row.iter()
                .enumerate()
                .map(|(c, &p)| {
                    let d = p - if c == label { 1.0 } else { 0.0 };
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    total / probs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramCell {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Reliability-diagram rows plus a confidence histogram over equal-width display cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityData {
    pub binning: BinningSpec,
    pub bins: Vec<Bin>,
    pub histogram: Vec<HistogramCell>,
    pub total: usize,
}

pub fn reliability_data(preds: &PredictionSet, spec: BinningSpec, hist_bins: usize) -> Result<ReliabilityData> {
    reliability_from_view(&top_label_view(preds), spec, hist_bins)
}

pub fn reliability_from_view(view: &TopLabelView, spec: BinningSpec, hist_bins: usize) -> Result<ReliabilityData> {
    if hist_bins == 0 {
        return Err(Error::ZeroBins);
    }
    let (_, stats) = bin_assign(view, spec)?;
    let mut counts = vec![0usize; hist_bins];
    for &c in &view.confidence {
        counts[equal_width_index(c, hist_bins)] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramCell {
            lower: i as f64 / hist_bins as f64,
            upper: (i + 1) as f64 / hist_bins as f64,
            count,
        })
        .collect();
    Ok(ReliabilityData {
        binning: spec,
        bins: stats.bins,
        histogram,
        total: stats.total,
    })
}

impl ReliabilityData {
    pub fn is_equal_width(&self) -> bool {
        self.binning.scheme == BinningScheme::EqualWidth
    }
}
