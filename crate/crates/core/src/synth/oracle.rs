//! Brute-force reference for the binned calibration error.
//!
//! Written as a literal transcription of the weighted bucket sum with its own
//! sort and bucketing loops; it shares no code with `metrics` or `binning`.
//! The floating-point reduction order is the same as the optimized path (bin
//! by bin, examples in index order within a bin, weighted sums carried in
//! double-double and divided by `n` once), so the two agree bit for bit.

use crate::binning::BinningScheme;
use crate::error::{Error, Result};
use crate::metrics::{Aggregation, EceConfig, Norm};
use crate::predictions::PredictionSet;
use crate::recal::probabilities_of;

pub fn brute_force_ece_oracle(preds: &PredictionSet, cfg: &EceConfig) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.binning.num_bins == 0 || cfg.class_wise_bins == 0 {
        return Err(Error::ZeroBins);
    }
    let probs = probabilities_of(preds);
    let n = probs.len();
    let k = probs.num_classes();
    let scheme = cfg.binning.scheme;
    match cfg.aggregation {
        Aggregation::TopLabel => {
            let mut conf = Vec::new();
            let mut acc = Vec::new();
            for j in 0..n {
                let row = probs.row(j);
                let mut max = row[0];
                for c in 1..k {
                    if row[c] > max {
                        max = row[c];
                    }
                }
                conf.push(max);
                acc.push(row[probs.labels()[j]] == max);
            }
            brute_force_binned(&conf, &acc, scheme, cfg.binning.num_bins, cfg.norm)
        }
        Aggregation::ClassWise => {
            let mut sum = 0.0;
            for c in 0..k {
                let mut conf = Vec::new();
                let mut acc = Vec::new();
                for j in 0..n {
                    conf.push(probs.row(j)[c]);
                    acc.push(probs.labels()[j] == c);
                }
                sum += brute_force_binned(&conf, &acc, scheme, cfg.class_wise_bins, cfg.norm)?;
            }
            Ok(sum / k as f64)
        }
        Aggregation::AllLabel => {
            let mut conf = Vec::new();
            let mut acc = Vec::new();
            for j in 0..n {
                for c in 0..k {
                    conf.push(probs.row(j)[c]);
                    acc.push(probs.labels()[j] == c);
                }
            }
            brute_force_binned(&conf, &acc, scheme, cfg.binning.num_bins, cfg.norm)
        }
    }
}

/// The bucketed estimator over raw `(confidence, correct)` pairs.
pub fn brute_force_binned(conf: &[f64], acc: &[bool], scheme: BinningScheme, m: usize, norm: Norm) -> Result<f64> {
    let n = conf.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if m == 0 {
        return Err(Error::ZeroBins);
    }
    let mut bucket = vec![0usize; n];
    match scheme {
        BinningScheme::EqualWidth => {
            for j in 0..n {
                let mut b = (conf[j] * m as f64).floor() as usize;
                if b >= m {
                    b = m - 1;
                }
                bucket[j] = b;
            }
        }
        BinningScheme::EqualMass => {
            if m > n {
                return Err(Error::TooManyBins { bins: m, samples: n });
            }
            let mut sorted: Vec<(f64, usize)> = Vec::new();
            for j in 0..n {
                sorted.push((conf[j], j));
            }
            sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            let mut next = 0;
            for i in 0..m {
                let mut size = n / m;
                if i < n % m {
                    size += 1;
                }
                for _ in 0..size {
                    bucket[sorted[next].1] = i;
                    next += 1;
                }
            }
        }
    }
    // sum of count * |gap| (or count * gap^2) as an unevaluated pair hi + lo
    let mut hi = 0.0f64;
    let mut lo = 0.0f64;
    for i in 0..m {
        let mut count = 0usize;
        let mut correct = 0usize;
        let mut conf_sum = 0.0;
        for j in 0..n {
            if bucket[j] == i {
                count += 1;
                conf_sum += conf[j];
                if acc[j] {
                    correct += 1;
                }
            }
        }
        if count == 0 {
            continue;
        }
        let confidence = conf_sum / count as f64;
        let accuracy = correct as f64 / count as f64;
        let gap = (accuracy - confidence).abs();
        let c = count as f64;
        let (term, term_err) = if norm == Norm::L1 {
            let p = c * gap;
            (p, c.mul_add(gap, -p))
        } else {
            let q = gap * gap;
            let q_err = gap.mul_add(gap, -q);
            let p = c * q;
            (p, c.mul_add(q, -p) + c * q_err)
        };
        let s = hi + term;
        let back = s - hi;
        let s_err = (hi - (s - back)) + (term - back);
        let t = s_err + lo + term_err;
        hi = s + t;
        lo = t - (hi - s);
    }
    let d = n as f64;
    let q1 = hi / d;
    let p = q1 * d;
    let p_err = q1.mul_add(d, -p);
    let q2 = ((hi - p) - p_err + lo) / d;
    let mean_hi = q1 + q2;
    let mean_lo = q2 - (mean_hi - q1);
    if norm != Norm::Rms {
        return Ok(mean_hi + mean_lo);
    }
    if mean_hi <= 0.0 {
        return Ok(0.0);
    }
    let r = mean_hi.sqrt();
    let rr = r * r;
    let rr_err = r.mul_add(r, -rr);
    Ok(r + ((mean_hi - rr) - rr_err + mean_lo) / (2.0 * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::BinningSpec;
    use crate::metrics::ece;
    use crate::predictions::ScoreKind;
    use crate::synth::random_instance;

    #[test]
    fn hand_value() {
        let v = brute_force_binned(&[1.0, 1.0, 0.5, 0.5], &[true, false, true, false], BinningScheme::EqualMass, 1, Norm::L1).unwrap();
        assert_eq!(v, 0.25);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            brute_force_binned(&[], &[], BinningScheme::EqualWidth, 3, Norm::L1),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn agrees_with_metrics_on_a_few_instances() {
        for seed in 0..20 {
            let p = random_instance(seed, 40, 4);
            let cfg = EceConfig {
                binning: BinningSpec::equal_mass(p.len().min(7)).unwrap(),
                class_wise_bins: p.len().min(3),
                ..EceConfig::default()
            };
            assert_eq!(ece(&p, &cfg).unwrap(), brute_force_ece_oracle(&p, &cfg).unwrap());
        }
    }

    #[test]
    fn probabilities_and_their_logits_agree_in_top_label_correctness() {
        let p = PredictionSet::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5]], ScoreKind::Probabilities, vec![1, 0]).unwrap();
        let cfg = EceConfig::top_label(BinningSpec::equal_width(1).unwrap(), Norm::L1);
        assert_eq!(brute_force_ece_oracle(&p, &cfg).unwrap(), ((0.8f64 + 0.5) / 2.0 - 1.0).abs());
    }
}
