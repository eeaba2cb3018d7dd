//! Temperature scaling.
//!
//! Convention: `p = softmax(z / T)`, so `T` divides the logits and a fitted
//! `T > 1` means the unscaled model was overconfident. The fit minimizes mean
//! NLL with a golden-section search over `ln T` on `[T_MIN, T_MAX]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictions::{softmax_into, PredictionSet, ScoreKind};

pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 20.0;
/// Absolute tolerance on `ln T` at which the search stops.
pub const LOG_T_TOLERANCE: f64 = 1e-5;
/// Probability floor used when converting probabilities to logits.
pub const LOGIT_CLAMP: f64 = 1e-12;

/// Logits become probabilities row-wise; probabilities pass through unchanged.
pub fn probabilities_of(preds: &PredictionSet) -> PredictionSet {
    match preds.kind() {
        ScoreKind::Probabilities => preds.clone(),
        ScoreKind::Logits => {
            let k = preds.num_classes();
            let mut out = vec![0.0; preds.scores().len()];
            for (row, dst) in preds.rows().zip(out.chunks_mut(k)) {
                softmax_into(row, dst);
            }
            preds.with_scores(out, k, ScoreKind::Probabilities)
        }
    }
}

/// Row-wise `ln p` (with `p` clamped to `[1e-12, 1]`) as a logit representative.
pub fn logits_of(preds: &PredictionSet) -> PredictionSet {
    match preds.kind() {
        ScoreKind::Logits => preds.clone(),
        ScoreKind::Probabilities => {
            let scores = preds.scores().iter().map(|&p| p.clamp(LOGIT_CLAMP, 1.0).ln()).collect();
            preds.with_scores(scores, preds.num_classes(), ScoreKind::Logits)
        }
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTemperature(t))
    }
}

/// Probabilities of `logits / T`. `T = 1` returns [`probabilities_of`] exactly.
pub fn apply_temperature(preds: &PredictionSet, t: f64) -> Result<PredictionSet> {
    check_temperature(t)?;
    if t == 1.0 {
        return Ok(probabilities_of(preds));
    }
    let logits = logits_of(preds);
    let k = logits.num_classes();
    let mut scaled = vec![0.0; k];
    let mut out = vec![0.0; logits.scores().len()];
    for (row, dst) in logits.rows().zip(out.chunks_mut(k)) {
        for (s, &z) in scaled.iter_mut().zip(row) {
            *s = z / t;
        }
        softmax_into(&scaled, dst);
    }
    Ok(preds.with_scores(out, k, ScoreKind::Probabilities))
}

/// Divides logits by `t` and keeps the result as logits.
pub(crate) fn scale_logits(preds: &PredictionSet, t: f64) -> Result<PredictionSet> {
    check_temperature(t)?;
    let logits = logits_of(preds);
    let scores = logits.scores().iter().map(|&z| z / t).collect();
    Ok(preds.with_scores(scores, logits.num_classes(), ScoreKind::Logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Mean NLL at the returned temperature.
    pub final_nll: f64,
    pub iterations: usize,
    pub hit_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub value: f64,
    pub diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceBias {
    Overconfident,
    Underconfident,
    Neutral,
}

impl Temperature {
    /// Reading of the temperature as a confidence factor.
    pub fn confidence_bias(&self) -> ConfidenceBias {
        if self.value > 1.0 {
            ConfidenceBias::Overconfident
        } else if self.value < 1.0 {
            ConfidenceBias::Underconfident
        } else {
            ConfidenceBias::Neutral
        }
    }
}

/// Mean NLL of `softmax(z / T)` over a fixed logit matrix.
#[derive(Debug, Clone)]
pub struct TemperatureObjective {
    logits: Vec<f64>,
    labels: Vec<usize>,
    k: usize,
}

impl TemperatureObjective {
    pub fn new(preds: &PredictionSet) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::EmptyFitSet);
        }
        let logits = logits_of(preds);
        Ok(Self {
            logits: logits.scores().to_vec(),
            labels: logits.labels().to_vec(),
            k: logits.num_classes(),
        })
    }

    /// Exact log-softmax NLL, no clamping.
    pub fn mean_nll(&self, t: f64) -> f64 {
        let inv = 1.0 / t;
        let mut total = 0.0;
        for (row, &label) in self.logits.chunks(self.k).zip(&self.labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max) * inv;
            let lse = row.iter().map(|&z| (z * inv - max).exp()).sum::<f64>().ln() + max;
            total += lse - row[label] * inv;
        }
        total / self.labels.len() as f64
    }

    pub fn mean_nll_at_log(&self, log_t: f64) -> f64 {
        self.mean_nll(log_t.exp())
    }
}

/// Temperature minimizing mean NLL on `fit_set`.
pub fn fit_temperature(fit_set: &PredictionSet) -> Result<Temperature> {
    let objective = TemperatureObjective::new(fit_set)?;
    Ok(minimize_log_temperature(&objective))
}

fn minimize_log_temperature(objective: &TemperatureObjective) -> Temperature {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (lo_bound, hi_bound) = (T_MIN.ln(), T_MAX.ln());
    let (mut a, mut b) = (lo_bound, hi_bound);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective.mean_nll_at_log(c);
    let mut fd = objective.mean_nll_at_log(d);
    let mut iterations = 0;
    while b - a > LOG_T_TOLERANCE {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective.mean_nll_at_log(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective.mean_nll_at_log(d);
        }
    }
    let mid = 0.5 * (a + b);
    let f_mid = objective.mean_nll_at_log(mid);
    // the bracket collapses onto a bound when the objective is monotone there
    let f_lo = objective.mean_nll(T_MIN);
    let f_hi = objective.mean_nll(T_MAX);
    let (value, final_nll, hit_boundary) = if f_lo <= f_mid && f_lo <= f_hi {
        (T_MIN, f_lo, true)
    } else if f_hi <= f_mid {
        (T_MAX, f_hi, true)
    } else {
        (mid.exp(), f_mid, false)
    };
    Temperature {
        value,
        diagnostics: FitDiagnostics {
            final_nll,
            iterations,
            hit_boundary,
        },
    }
}

/// Optimal temperature on a target dataset: `> 1` overconfident, `< 1` underconfident.
pub fn confidence_factor(target_set: &PredictionSet) -> Result<Temperature> {
    fit_temperature(target_set)
}

/// Seeded uniform shuffle; the first `floor(fraction * n)` examples form the
/// fit part. Both parts keep their original relative order.
pub fn split_holdout(preds: &PredictionSet, fraction: f64, seed: u64) -> Result<(PredictionSet, PredictionSet)> {
    let n = preds.len();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction {fraction} is outside (0, 1)")));
    }
    let n_fit = (fraction * n as f64).floor() as usize;
    if n < 2 || n_fit == 0 || n_fit == n {
        return Err(Error::DegenerateSplit { fraction, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let (fit, eval) = order.split_at_mut(n_fit);
    fit.sort_unstable();
    eval.sort_unstable();
    Ok((preds.select(fit)?, preds.select(eval)?))
}

/// Restricts logits to `keep` (in that order) and remaps labels; stays in logit space.
pub fn restrict_logits(preds: &PredictionSet, keep: &[usize]) -> Result<PredictionSet> {
    if keep.is_empty() {
        return Err(Error::EmptySubset);
    }
    let k = preds.num_classes();
    let mut position = vec![None; k];
    for (i, &c) in keep.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidSubset(format!("class {c} is outside [0, {k})")));
        }
        if position[c].replace(i).is_some() {
            return Err(Error::InvalidSubset(format!("class {c} listed twice")));
        }
    }
    if keep.len() < 2 {
        return Err(Error::InvalidSubset("at least 2 classes must be kept".into()));
    }
    let labels = preds
        .labels()
        .iter()
        .enumerate()
        .map(|(row, &label)| position[label].ok_or(Error::LabelNotInSubset { row, label }))
        .collect::<Result<Vec<_>>>()?;
    let logits = logits_of(preds);
    let mut scores = Vec::with_capacity(preds.len() * keep.len());
    for row in logits.rows() {
        scores.extend(keep.iter().map(|&c| row[c]));
    }
    Ok(preds.with_scores(scores, keep.len(), ScoreKind::Logits).with_labels(labels))
}

/// Class subset evaluation: logits restricted to `keep`, renormalized to probabilities.
pub fn subset_classes(preds: &PredictionSet, keep: &[usize]) -> Result<PredictionSet> {
    Ok(probabilities_of(&restrict_logits(preds, keep)?))
}
