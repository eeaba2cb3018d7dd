//! Bias of the binned squared calibration error and its Monte Carlo check.
//!
//! For a bin with `n_i` samples, the plug-in squared gap overestimates the
//! true one by `V[C - A] / n_i = (V[A] + V[C] - 2 Cov[C, A]) / n_i`. With a
//! binary `A`, `Cov[C, A] = a (1 - a) d` where `a` is the bin accuracy and
//! `d = E[C | A = 1] - E[C | A = 0]`, so the total bias of the squared
//! estimator is `(1/n) sum_i [a_i (1 - a_i)(1 - 2 d_i) + V[C | B_i]]`.
//!
//! Sample moments use the unbiased `n - 1` divisor. Under that convention
//! `V^[A] = a (1 - a) n_i / (n_i - 1)` and `Cov^ = a (1 - a) d n_i / (n_i - 1)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{assign_bins, BinningScheme, BinningSpec};
use crate::error::{Error, Result};
use crate::metrics::{ece_top_label, Aggregation, EceConfig, Norm};
use crate::predictions::TopLabelView;
use crate::synth::{draw_top_label, trial_rng, GeneratorSpec};

pub const VARIANCE_CONVENTION: &str = "unbiased sample moments (divisor n_i - 1)";

/// Sample moments of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinBiasInputs {
    pub count: usize,
    /// Sample accuracy `a_i`.
    pub accuracy: f64,
    pub accuracy_var: f64,
    pub confidence_var: f64,
    pub covariance: f64,
    /// `mean(C | A = 1) - mean(C | A = 0)`; `None` unless both outcomes occur.
    pub delta: Option<f64>,
}

impl BinBiasInputs {
    pub fn from_samples(confidence: &[f64], correct: &[bool]) -> Result<Self> {
        let n = confidence.len();
        if n != correct.len() {
            return Err(Error::InvalidArgument("confidence and correctness lengths differ".into()));
        }
        if n < 2 {
            return Err(Error::BinTooSmall(n));
        }
        let nf = n as f64;
        let a: Vec<f64> = correct.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect();
        let mean_c = confidence.iter().sum::<f64>() / nf;
        let mean_a = a.iter().sum::<f64>() / nf;
        let mut var_c = 0.0;
        let mut var_a = 0.0;
        let mut cov = 0.0;
        for (&c, &x) in confidence.iter().zip(&a) {
            var_c += (c - mean_c) * (c - mean_c);
            var_a += (x - mean_a) * (x - mean_a);
            cov += (c - mean_c) * (x - mean_a);
        }
        let denom = nf - 1.0;
        let (mut sum_hit, mut n_hit, mut sum_miss, mut n_miss) = (0.0, 0usize, 0.0, 0usize);
        for (&c, &hit) in confidence.iter().zip(correct) {
            if hit {
                sum_hit += c;
                n_hit += 1;
            } else {
                sum_miss += c;
                n_miss += 1;
            }
        }
        let delta = (n_hit > 0 && n_miss > 0).then(|| sum_hit / n_hit as f64 - sum_miss / n_miss as f64);
        Ok(Self {
            count: n,
            accuracy: mean_a,
            accuracy_var: var_a / denom,
            confidence_var: var_c / denom,
            covariance: cov / denom,
            delta,
        })
    }

    /// `V^[A] + V^[C] - 2 Cov^[C, A]`.
    pub fn gap_variance(&self) -> f64 {
        self.accuracy_var + self.confidence_var - 2.0 * self.covariance
    }
}

/// Plug-in per-bin bias `(1/n_i)(V^[A] + V^[C] - 2 Cov^[C, A])`.
pub fn per_bin_sq_bias(confidence: &[f64], correct: &[bool]) -> Result<f64> {
    let inputs = BinBiasInputs::from_samples(confidence, correct)?;
    Ok(inputs.gap_variance() / inputs.count as f64)
}

/// `(1/n) sum_i [a_i (1 - a_i)(1 - 2 d_i) + V[C | B_i]]`, evaluated on whatever
/// moments the caller supplies. Pure bins (`a_i` in {0, 1}) drop the first term.
pub fn lemma_bias(bins: &[BinBiasInputs], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for (i, bin) in bins.iter().enumerate() {
        let bernoulli = bin.accuracy * (1.0 - bin.accuracy);
        let mixed = if bernoulli == 0.0 {
            0.0
        } else {
            let delta = bin.delta.ok_or(Error::UndefinedDelta {
                bin: i,
                accuracy: bin.accuracy,
            })?;
            bernoulli * (1.0 - 2.0 * delta)
        };
        total += mixed + bin.confidence_var;
    }
    Ok(total / n as f64)
}

/// Per-bin moments of a binned view.
pub fn bin_moments(view: &TopLabelView, binning: BinningSpec) -> Result<Vec<BinBiasInputs>> {
    let assignment = assign_bins(&view.confidence, binning)?;
    let mut conf = vec![Vec::new(); binning.num_bins];
    let mut hit = vec![Vec::new(); binning.num_bins];
    for ((&c, &a), &b) in view.confidence.iter().zip(&view.correct).zip(&assignment) {
        conf[b].push(c);
        hit[b].push(a);
    }
    conf.iter()
        .zip(&hit)
        .filter(|(c, _)| !c.is_empty())
        .map(|(c, a)| BinBiasInputs::from_samples(c, a))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinBiasRow {
    pub bin: usize,
    pub reference_count: usize,
    pub accuracy: f64,
    pub delta: Option<f64>,
    pub confidence_var: f64,
    /// Per-bin bias at the study's expected per-bin count.
    pub eq5_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub generator: String,
    pub binning: BinningSpec,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub lemma_bias: f64,
    pub reference_n: usize,
    pub per_bin: Vec<BinBiasRow>,
    pub variance_convention: String,
}

impl BiasReport {
    /// `|MC mean - lemma| / stderr`.
    pub fn z_score(&self) -> f64 {
        (self.mc_mean - self.lemma_bias).abs() / self.mc_stderr
    }
}

/// Mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Stream index reserved for the reference draw.
const REFERENCE_STREAM: u64 = u64::MAX;

/// Monte Carlo estimate of `E[S^2]` for an exactly calibrated generator, where
/// the true bucketed `S^2` is 0, next to the lemma evaluated on a reference
/// draw of `100 n` samples.
pub fn mc_bias(gen: &GeneratorSpec, cfg: &EceConfig, n: usize, trials: usize, seed: u64) -> Result<BiasReport> {
    gen.validate()?;
    if cfg.norm != Norm::L2 || cfg.aggregation != Aggregation::TopLabel {
        return Err(Error::InvalidArgument("mc_bias studies the top-label l2 estimator".into()));
    }
    if gen.calibration != crate::synth::CalibrationMode::Exact {
        return Err(Error::InvalidArgument("mc_bias needs an exactly calibrated generator".into()));
    }
    if trials < 2 {
        return Err(Error::InvalidArgument("mc_bias needs at least 2 trials".into()));
    }
    if cfg.binning.scheme == BinningScheme::EqualMass && cfg.binning.num_bins > n {
        return Err(Error::TooManyBins {
            bins: cfg.binning.num_bins,
            samples: n,
        });
    }
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let view = draw_top_label(gen, n, &mut trial_rng(seed, t as u64))?;
            ece_top_label(&view, cfg.binning, Norm::L2)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mc_mean, mc_stderr) = mean_and_stderr(&values);

    let reference_n = 100 * n;
    let reference = draw_top_label(gen, reference_n, &mut trial_rng(seed, REFERENCE_STREAM))?;
    let moments = bin_moments(&reference, cfg.binning)?;
    let lemma = lemma_bias(&moments, n)?;
    let scale = n as f64 / reference_n as f64;
    let per_bin = moments
        .iter()
        .enumerate()
        .map(|(bin, m)| BinBiasRow {
            bin,
            reference_count: m.count,
            accuracy: m.accuracy,
            delta: m.delta,
            confidence_var: m.confidence_var,
            eq5_bias: m.gap_variance() / (m.count as f64 * scale),
        })
        .collect();
    Ok(BiasReport {
        generator: gen.describe(),
        binning: cfg.binning,
        n,
        trials,
        seed,
        mc_mean,
        mc_stderr,
        lemma_bias: lemma,
        reference_n,
        per_bin,
        variance_convention: VARIANCE_CONVENTION.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinCountBias {
    pub bins: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean plug-in l1 estimate per bin count on a calibrated generator, where
/// every measured value is bias. Each trial draws once and evaluates all bin
/// counts on that draw.
pub fn bias_vs_bins_study(
    gen: &GeneratorSpec,
    scheme: BinningScheme,
    n: usize,
    bin_counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<BinCountBias>> {
    gen.validate()?;
    if trials == 0 || bin_counts.is_empty() {
        return Err(Error::InvalidArgument("study needs trials and bin counts".into()));
    }
    let specs = bin_counts
        .iter()
        .map(|&m| {
            let spec = BinningSpec::new(scheme, m)?;
            if scheme == BinningScheme::EqualMass && m > n {
                return Err(Error::TooManyBins { bins: m, samples: n });
            }
            Ok(spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let view = draw_top_label(gen, n, &mut trial_rng(seed, t as u64))?;
            specs
                .iter()
                .map(|&spec| ece_top_label(&view, spec, Norm::L1))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let column: Vec<f64> = per_trial.iter().map(|row| row[i]).collect();
            let (mean, stderr) = mean_and_stderr(&column);
            BinCountBias {
                bins: spec.num_bins,
                mean,
                stderr,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ConfidenceLaw;

    #[test]
    fn constant_confidence_alternating_outcomes() {
        let v = per_bin_sq_bias(&[0.6; 4], &[true, false, true, false]).unwrap();
        assert!((v - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn perfectly_correlated_bin_has_no_bias() {
        let c = [1.0, 0.0, 1.0, 1.0, 0.0];
        let a = [true, false, true, true, false];
        assert!(per_bin_sq_bias(&c, &a).unwrap().abs() < 1e-15);
        assert_eq!(per_bin_sq_bias(&[0.9; 5], &[true; 5]).unwrap(), 0.0);
    }

    #[test]
    fn tiny_bin_rejected() {
        assert!(matches!(per_bin_sq_bias(&[0.9], &[true]), Err(Error::BinTooSmall(1))));
    }

    #[test]
    fn lemma_single_bin_hand_value() {
        let bin = BinBiasInputs {
            count: 10,
            accuracy: 0.5,
            accuracy_var: 0.25,
            confidence_var: 0.0,
            covariance: 0.0,
            delta: Some(0.0),
        };
        assert_eq!(lemma_bias(&[bin], 10).unwrap(), 0.025);
    }

    #[test]
    fn lemma_is_zero_for_pure_constant_bins() {
        let bins = vec![BinBiasInputs::from_samples(&[0.75; 6], &[true; 6]).unwrap(); 3];
        assert_eq!(lemma_bias(&bins, 18).unwrap(), 0.0);
    }

    #[test]
    fn lemma_needs_delta_for_mixed_bins() {
        let bin = BinBiasInputs {
            count: 4,
            accuracy: 0.5,
            accuracy_var: 1.0 / 3.0,
            confidence_var: 0.0,
            covariance: 0.0,
            delta: None,
        };
        assert!(matches!(lemma_bias(&[bin], 4), Err(Error::UndefinedDelta { bin: 0, .. })));
    }

    #[test]
    fn lemma_halves_when_n_doubles() {
        let bins = vec![BinBiasInputs::from_samples(&[0.7, 0.8, 0.9, 0.75], &[true, false, true, true]).unwrap(); 2];
        let a = lemma_bias(&bins, 100).unwrap();
        let b = lemma_bias(&bins, 200).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_decomposition_holds_on_samples() {
        let mut rng = crate::synth::seeded_rng(17);
        use rand::Rng;
        for _ in 0..200 {
            let n = rng.random_range(3..40);
            let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut a: Vec<bool> = c.iter().map(|&x| rng.random::<f64>() < x).collect();
            a[0] = true;
            a[1] = false;
            let m = BinBiasInputs::from_samples(&c, &a).unwrap();
            let nf = n as f64;
            let factor = nf / (nf - 1.0);
            let bern = m.accuracy * (1.0 - m.accuracy);
            let delta = m.delta.unwrap();
            assert!((m.covariance - bern * delta * factor).abs() < 1e-12);
            assert!((m.accuracy_var - bern * factor).abs() < 1e-12);
            let eq5 = per_bin_sq_bias(&c, &a).unwrap() * nf;
            let lemma_form = factor * bern * (1.0 - 2.0 * delta) + m.confidence_var;
            assert!((eq5 - lemma_form).abs() < 1e-9);
        }
    }

    #[test]
    fn accuracy_derivative_is_negative_above_one_half() {
        let term = |alpha: f64, delta: f64| alpha * (1.0 - alpha) * (1.0 - 2.0 * delta) / 1000.0;
        for i in 0..50 {
            let alpha = 0.505 + 0.0099 * i as f64;
            for j in 0..50 {
                let delta = 0.0099 * j as f64;
                assert!(term(alpha + 1e-4, delta) < term(alpha, delta), "alpha {alpha} delta {delta}");
            }
        }
    }

    #[test]
    fn translation_leaves_per_bin_bias_unchanged() {
        let c = [0.61, 0.72, 0.55, 0.93, 0.81, 0.66];
        let a = [true, false, true, true, false, true];
        let base = per_bin_sq_bias(&c, &a).unwrap();
        for shift in [-3.0, 0.25, 10.0] {
            let moved: Vec<f64> = c.iter().map(|x| x + shift).collect();
            assert!((per_bin_sq_bias(&moved, &a).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_generator_has_zero_bias() {
        let gen = GeneratorSpec::calibrated(ConfidenceLaw::Point { c: 1.0 }, 2, 0);
        let cfg = EceConfig::top_label(BinningSpec::equal_mass(10).unwrap(), Norm::L2);
        let report = mc_bias(&gen, &cfg, 100, 100, 3).unwrap();
        assert_eq!(report.mc_mean, 0.0);
        assert_eq!(report.lemma_bias, 0.0);
    }

    #[test]
    fn mc_bias_is_reproducible() {
        let gen = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.5, hi: 1.0 }, 2, 0);
        let cfg = EceConfig::top_label(BinningSpec::equal_mass(5).unwrap(), Norm::L2);
        let a = mc_bias(&gen, &cfg, 200, 100, 9).unwrap();
        let b = mc_bias(&gen, &cfg, 200, 100, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.z_score() < 4.0, "z = {}", a.z_score());
        assert!(mc_bias(&gen, &EceConfig::default(), 200, 100, 9).is_err());
    }

    #[test]
    fn single_bin_study_is_near_zero() {
        let gen = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.5, hi: 1.0 }, 2, 0);
        let rows = bias_vs_bins_study(&gen, BinningScheme::EqualMass, 10_000, &[1], 50, 1).unwrap();
        // |E[C] - E[A]| = 0, so only O(n^-1/2) sampling noise remains
        assert!(rows[0].mean < 3.0 / 100.0, "mean {}", rows[0].mean);
    }

    #[test]
    fn study_rejects_too_many_bins() {
        let gen = GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.5, hi: 1.0 }, 2, 0);
        assert!(matches!(
            bias_vs_bins_study(&gen, BinningScheme::EqualMass, 10, &[20], 5, 1),
            Err(Error::TooManyBins { .. })
        ));
    }
}
