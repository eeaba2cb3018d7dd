//! Synthetic predictors with known calibration.
//!
//! All randomness comes from ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded
//! with `seed_from_u64`. Studies that need many independent draws use the
//! same seed with one ChaCha stream per trial (see [`trial_rng`]). Nothing
//! reads OS entropy.
//!
//! A calibrated row is built from its top-label confidence `C`: the argmax
//! class is uniform over `k`, the remaining `1 - C` is spread over the other
//! classes by a [`MassAllocation`], and the label is the argmax class with
//! probability `C`, otherwise drawn from the other classes in proportion to
//! their mass. Every class probability is therefore calibrated, not just the
//! top label.

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictions::{PredictionSet, ScoreKind, TopLabelView};
use crate::recal::{scale_logits, LOGIT_CLAMP};

pub use oracle::brute_force_ece_oracle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ConfidenceLaw {
    /// `C ~ Uniform[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `C = 1/k + (1 - 1/k) X` with `X ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
    Point { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationMode {
    /// `A | C ~ Bernoulli(C)`.
    Exact,
    /// Exact base whose logits are multiplied by `temperature`, so that a
    /// refit recovers `temperature` under the divisor convention.
    Distorted { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum MassAllocation {
    Uniform,
    /// Other classes, in index order, get mass proportional to `ratio^j`.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub confidence_law: ConfidenceLaw,
    #[serde(default = "exact")]
    pub calibration: CalibrationMode,
    pub classes: usize,
    #[serde(default = "uniform_allocation")]
    pub allocation: MassAllocation,
    #[serde(default)]
    pub seed: u64,
}

fn exact() -> CalibrationMode {
    CalibrationMode::Exact
}

fn uniform_allocation() -> MassAllocation {
    MassAllocation::Uniform
}

impl GeneratorSpec {
    pub fn calibrated(confidence_law: ConfidenceLaw, classes: usize, seed: u64) -> Self {
        Self {
            confidence_law,
            calibration: CalibrationMode::Exact,
            classes,
            allocation: MassAllocation::Uniform,
            seed,
        }
    }

    pub fn with_allocation(mut self, allocation: MassAllocation) -> Self {
        self.allocation = allocation;
        self
    }

    pub fn distorted(mut self, temperature: f64) -> Self {
        self.calibration = CalibrationMode::Distorted { temperature };
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.classes;
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        let floor = 1.0 / k as f64;
        let lowest = match self.confidence_law {
            ConfidenceLaw::Uniform { lo, hi } => {
                if !(lo >= floor && lo <= hi && hi <= 1.0) {
                    return Err(Error::InvalidSupport(format!(
                        "uniform [{lo}, {hi}) must lie within [1/{k}, 1]"
                    )));
                }
                lo
            }
            ConfidenceLaw::Beta { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidSupport(format!("beta({a}, {b}) needs positive shapes")));
                }
                floor
            }
            ConfidenceLaw::Point { c } => {
                if !(c >= floor && c <= 1.0) {
                    return Err(Error::InvalidSupport(format!("point mass {c} outside [1/{k}, 1]")));
                }
                c
            }
        };
        if let MassAllocation::Geometric { ratio } = self.allocation {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::InvalidArgument(format!("geometric ratio {ratio} outside (0, 1]")));
            }
            let largest = geometric_weights(k - 1, ratio)[0];
            if (1.0 - lowest) * largest > lowest {
                return Err(Error::InvalidSupport(format!(
                    "geometric allocation gives a non-argmax class more mass than confidence {lowest}"
                )));
            }
        }
        if let CalibrationMode::Distorted { temperature } = self.calibration {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(Error::NonPositiveTemperature(temperature));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        let law = match self.confidence_law {
            ConfidenceLaw::Uniform { lo, hi } => format!("C ~ Uniform[{lo}, {hi})"),
            ConfidenceLaw::Beta { a, b } => format!("C ~ 1/k + (1-1/k) Beta({a}, {b})"),
            ConfidenceLaw::Point { c } => format!("C = {c}"),
        };
        let cal = match self.calibration {
            CalibrationMode::Exact => "A|C ~ Bernoulli(C)".to_string(),
            CalibrationMode::Distorted { temperature } => format!("calibrated base, logits x {temperature}"),
        };
        format!("{law}; {cal}; k = {}; seed = {}", self.classes, self.seed)
    }
}

fn geometric_weights(len: usize, ratio: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|j| ratio.powi(j as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Root generator for a seed.
pub fn seeded_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Independent generator for one trial: same key, stream `index`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_confidence<R: Rng>(law: &ConfidenceLaw, k: usize, beta: Option<&Beta<f64>>, rng: &mut R) -> f64 {
    match *law {
        ConfidenceLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        ConfidenceLaw::Beta { .. } => {
            let floor = 1.0 / k as f64;
            let x = beta.expect("beta law is built in advance").sample(rng);
            floor + (1.0 - floor) * x
        }
        ConfidenceLaw::Point { c } => c,
    }
}

fn beta_for(law: &ConfidenceLaw) -> Result<Option<Beta<f64>>> {
    match *law {
        ConfidenceLaw::Beta { a, b } => Beta::new(a, b)
            .map(Some)
            .map_err(|e| Error::InvalidSupport(e.to_string())),
        _ => Ok(None),
    }
}

/// Draws `n` calibrated `(C, A)` pairs directly, skipping the score matrix.
pub fn draw_top_label<R: Rng>(spec: &GeneratorSpec, n: usize, rng: &mut R) -> Result<TopLabelView> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let beta = beta_for(&spec.confidence_law)?;
    let mut confidence = Vec::with_capacity(n);
    let mut correct = Vec::with_capacity(n);
    for _ in 0..n {
        let c = draw_confidence(&spec.confidence_law, spec.classes, beta.as_ref(), rng);
        confidence.push(c);
        correct.push(rng.random::<f64>() < c);
    }
    TopLabelView::new(confidence, correct)
}

/// Exactly calibrated logits (log-probabilities) for `n` examples, ids `"0".."n-1"`.
pub fn gen_calibrated(spec: &GeneratorSpec, n: usize) -> Result<PredictionSet> {
    spec.validate()?;
    if spec.calibration != CalibrationMode::Exact {
        return Err(Error::InvalidArgument("gen_calibrated needs exact calibration".into()));
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let k = spec.classes;
    let beta = beta_for(&spec.confidence_law)?;
    let weights = match spec.allocation {
        MassAllocation::Uniform => vec![1.0 / (k - 1) as f64; k - 1],
        MassAllocation::Geometric { ratio } => geometric_weights(k - 1, ratio),
    };
    let mut rng = seeded_rng(spec.seed);
    let mut scores = Vec::with_capacity(n * k);
    let mut labels = Vec::with_capacity(n);
    let mut row = vec![0.0; k];
    for _ in 0..n {
        let c = draw_confidence(&spec.confidence_law, k, beta.as_ref(), &mut rng);
        let top = rng.random_range(0..k);
        let hit = rng.random::<f64>() < c;
        let others: Vec<usize> = (0..k).filter(|&j| j != top).collect();
        row[top] = c;
        for (&class, &w) in others.iter().zip(&weights) {
            row[class] = (1.0 - c) * w;
        }
        let label = if hit {
            top
        } else {
            match spec.allocation {
                MassAllocation::Uniform => others[rng.random_range(0..k - 1)],
                MassAllocation::Geometric { .. } => {
                    let u = rng.random::<f64>();
                    let mut acc = 0.0;
                    let mut pick = others[k - 2];
                    for (&class, &w) in others.iter().zip(&weights) {
                        acc += w;
                        if u < acc {
                            pick = class;
                            break;
                        }
                    }
                    pick
                }
            }
        };
        scores.extend(row.iter().map(|&p| p.max(LOGIT_CLAMP).ln()));
        labels.push(label);
    }
    PredictionSet::new(scores, k, ScoreKind::Logits, labels)?.with_example_ids((0..n).map(|j| j.to_string()).collect())
}

/// Multiplies the logits of `base` by `t_true` (temperature `1 / t_true`); labels are unchanged.
pub fn gen_distorted(base: &PredictionSet, t_true: f64) -> Result<PredictionSet> {
    if !(t_true > 0.0 && t_true.is_finite()) {
        return Err(Error::NonPositiveTemperature(t_true));
    }
    scale_logits(base, 1.0 / t_true)
}

/// Generates per the spec's calibration mode.
pub fn generate(spec: &GeneratorSpec, n: usize) -> Result<PredictionSet> {
    match spec.calibration {
        CalibrationMode::Exact => gen_calibrated(spec, n),
        CalibrationMode::Distorted { temperature } => {
            let base = GeneratorSpec {
                calibration: CalibrationMode::Exact,
                ..*spec
            };
            gen_distorted(&gen_calibrated(&base, n)?, temperature)
        }
    }
}

/// Default pair for selective-prediction comparisons over 10 classes.
///
/// Model A is the more accurate one (error about 0.12) but mildly
/// overconfident; model B is exactly calibrated with error about 0.20. At
/// `n = 10^5` and 15 equal-mass bins the error gap is about 0.08 and B's l1
/// ECE is lower by about 0.009.
pub fn selective_pair(seed_a: u64, seed_b: u64) -> (GeneratorSpec, GeneratorSpec) {
    let a = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.76, hi: 1.0 }, 10, seed_a).distorted(1.033);
    let b = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.6, hi: 1.0 }, 10, seed_b);
    (a, b)
}

/// Small random prediction set for estimator cross-checks: `1..=max_n`
/// examples, `2..=max_k` classes, mixed kinds, and frequent exact ties
/// (scores drawn on a coarse grid for about half of the instances).
pub fn random_instance(seed: u64, max_n: usize, max_k: usize) -> PredictionSet {
    let mut rng = seeded_rng(seed);
    let n = rng.random_range(1..=max_n.max(1));
    let k = rng.random_range(2..=max_k.max(2));
    let coarse = rng.random::<bool>();
    let logits = rng.random::<bool>();
    let mut scores = Vec::with_capacity(n * k);
    for _ in 0..n {
        let raw: Vec<f64> = (0..k)
            .map(|_| {
                if coarse {
                    rng.random_range(1..=4) as f64
                } else {
                    rng.random_range(0.01..1.0)
                }
            })
            .collect();
        if logits {
            scores.extend(raw.iter().map(|x| 3.0 * x.ln()));
        } else {
            let total: f64 = raw.iter().sum();
            scores.extend(raw.iter().map(|x| x / total));
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..k)).collect();
    let kind = if logits {
        ScoreKind::Logits
    } else {
        ScoreKind::Probabilities
    };
    PredictionSet::new(scores, k, kind, labels).expect("random instance is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::BinningSpec;
    use crate::metrics::{ece_top_label, Norm};
    use crate::predictions::top_label_view;
    use crate::recal::{fit_temperature, probabilities_of};

    fn half_to_one(seed: u64) -> GeneratorSpec {
        GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.5, hi: 1.0 }, 2, seed)
    }

    #[test]
    fn support_checks() {
        let bad = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.2, hi: 1.0 }, 3, 0);
        assert!(matches!(bad.validate(), Err(Error::InvalidSupport(_))));
        let bad = GeneratorSpec::calibrated(ConfidenceLaw::Point { c: 1.2 }, 3, 0);
        assert!(matches!(bad.validate(), Err(Error::InvalidSupport(_))));
        let bad = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.3, hi: 1.0 }, 4, 0)
            .with_allocation(MassAllocation::Geometric { ratio: 0.5 });
        assert!(matches!(bad.validate(), Err(Error::InvalidSupport(_))));
        let ok = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.6, hi: 1.0 }, 4, 0)
            .with_allocation(MassAllocation::Geometric { ratio: 0.5 });
        ok.validate().unwrap();
        assert!(matches!(half_to_one(0).distorted(0.0).validate(), Err(Error::NonPositiveTemperature(_))));
    }

    #[test]
    fn accuracy_tracks_mean_confidence() {
        let p = gen_calibrated(&half_to_one(11), 100_000).unwrap();
        let view = top_label_view(&p);
        let stderr = (0.75f64 * 0.25 / 100_000.0).sqrt();
        assert!((view.accuracy() - 0.75).abs() < 3.0 * stderr + 1e-3, "accuracy {}", view.accuracy());
        let value = ece_top_label(&view, BinningSpec::equal_mass(15).unwrap(), Norm::L1).unwrap();
        assert!(value < 0.01, "ece {value}");
    }

    #[test]
    fn same_seed_same_bits() {
        let a = gen_calibrated(&half_to_one(3), 500).unwrap();
        let b = gen_calibrated(&half_to_one(3), 500).unwrap();
        assert_eq!(a, b);
        let c = gen_calibrated(&half_to_one(4), 500).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn calibrated_rows_have_expected_shape() {
        let spec = GeneratorSpec::calibrated(ConfidenceLaw::Beta { a: 2.0, b: 2.0 }, 5, 9);
        let p = probabilities_of(&gen_calibrated(&spec, 200).unwrap());
        for row in p.rows() {
            let max = row.iter().copied().fold(0.0, f64::max);
            assert!(max >= 0.2 - 1e-12);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_allocation_decays() {
        let spec = GeneratorSpec::calibrated(ConfidenceLaw::Point { c: 0.7 }, 4, 1)
            .with_allocation(MassAllocation::Geometric { ratio: 0.5 });
        let p = probabilities_of(&gen_calibrated(&spec, 50).unwrap());
        for row in p.rows() {
            let mut rest: Vec<f64> = row.iter().copied().filter(|&x| (x - 0.7).abs() > 1e-9).collect();
            assert_eq!(rest.len(), 3);
            let expected = [0.3 * 4.0 / 7.0, 0.3 * 2.0 / 7.0, 0.3 / 7.0];
            rest.sort_by(|a, b| b.total_cmp(a));
            for (r, e) in rest.iter().zip(expected) {
                assert!((r - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distortion_sharpens_and_keeps_argmax() {
        let base = gen_calibrated(&half_to_one(5), 1000).unwrap();
        let same = gen_distorted(&base, 1.0).unwrap();
        assert_eq!(probabilities_of(&same), probabilities_of(&base));
        let sharp = gen_distorted(&base, 2.0).unwrap();
        let (vb, vs) = (top_label_view(&base), top_label_view(&sharp));
        assert_eq!(vb.correct, vs.correct);
        for (cb, cs) in vb.confidence.iter().zip(&vs.confidence) {
            assert!(cs > cb || *cb == 0.5);
        }
    }

    #[test]
    fn distortion_is_recovered() {
        let spec = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.3, hi: 1.0 }, 5, 21).distorted(2.0);
        let t = fit_temperature(&generate(&spec, 100_000).unwrap()).unwrap();
        assert!((t.value - 2.0).abs() < 0.04, "T = {}", t.value);
    }

    #[test]
    fn trial_streams_differ() {
        let mut a = trial_rng(1, 0);
        let mut b = trial_rng(1, 1);
        assert_ne!(a.random::<u64>(), b.random::<u64>());
        let mut c = trial_rng(1, 0);
        let mut d = trial_rng(1, 0);
        assert_eq!(c.random::<u64>(), d.random::<u64>());
    }

    #[test]
    fn random_instances_are_valid() {
        for seed in 0..50 {
            let p = random_instance(seed, 100, 5);
            assert!(p.len() <= 100 && p.num_classes() <= 5);
        }
    }
}
