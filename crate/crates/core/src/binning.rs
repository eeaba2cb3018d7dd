//! Bucketing of confidence values into `m` bins.
//!
//! Both schemes assign each value to a bin index first and then accumulate
//! per-bin statistics in original example order. Equal-mass bins sort by
//! `(value, index)` and hand the first `n mod m` bins one extra element.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictions::TopLabelView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningScheme {
    EqualWidth,
    EqualMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinningSpec {
    pub scheme: BinningScheme,
    pub num_bins: usize,
}

impl BinningSpec {
    pub fn new(scheme: BinningScheme, num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::ZeroBins);
        }
        Ok(Self { scheme, num_bins })
    }

    pub fn equal_mass(num_bins: usize) -> Result<Self> {
        Self::new(BinningScheme::EqualMass, num_bins)
    }

    pub fn equal_width(num_bins: usize) -> Result<Self> {
        Self::new(BinningScheme::EqualWidth, num_bins)
    }
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            scheme: BinningScheme::EqualMass,
            num_bins: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub correct: usize,
    /// `confidence(B_i)`; 0 for an empty bin.
    pub mean_confidence: f64,
    /// `accuracy(B_i)`; 0 for an empty bin.
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bins: Vec<Bin>,
    pub total: usize,
}

impl BinStats {
    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(|b| b.count).collect()
    }
}

/// Bin index for every value. Equal-width bins are `[i/m, (i+1)/m)` with the
/// top bin closed on the right.
pub fn assign_bins(values: &[f64], spec: BinningSpec) -> Result<Vec<usize>> {
    let n = values.len();
    let m = spec.num_bins;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if m == 0 {
        return Err(Error::ZeroBins);
    }
    match spec.scheme {
        BinningScheme::EqualWidth => Ok(values.iter().map(|&v| equal_width_index(v, m)).collect()),
        BinningScheme::EqualMass => {
            if m > n {
                return Err(Error::TooManyBins { bins: m, samples: n });
            }
            let mut order: Vec<usize> = (0..n).collect();
            // stable, so equal values keep index order
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let mut assignment = vec![0; n];
            let mut pos = 0;
            for (bin, size) in equal_mass_sizes(n, m).into_iter().enumerate() {
                for &j in &order[pos..pos + size] {
                    assignment[j] = bin;
                }
                pos += size;
            }
            Ok(assignment)
        }
    }
}

pub(crate) fn equal_width_index(v: f64, m: usize) -> usize {
    ((v * m as f64).floor() as usize).min(m - 1)
}

/// Group sizes `ceil(n/m)` for the first `n mod m` bins, `floor(n/m)` after.
pub fn equal_mass_sizes(n: usize, m: usize) -> Vec<usize> {
    let base = n / m;
    let extra = n % m;
    (0..m).map(|i| base + usize::from(i < extra)).collect()
}

/// Per-bin statistics for a precomputed assignment.
pub fn bin_stats(values: &[f64], outcomes: &[bool], assignment: &[usize], spec: BinningSpec) -> BinStats {
    let m = spec.num_bins;
    let mut count = vec![0usize; m];
    let mut correct = vec![0usize; m];
    let mut sum = vec![0.0f64; m];
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for ((&v, &a), &b) in values.iter().zip(outcomes).zip(assignment) {
        count[b] += 1;
        correct[b] += usize::from(a);
        sum[b] += v;
        lo[b] = lo[b].min(v);
        hi[b] = hi[b].max(v);
    }
    let bins = (0..m)
        .map(|i| {
            let (lower, upper) = match spec.scheme {
                BinningScheme::EqualWidth => (i as f64 / m as f64, (i + 1) as f64 / m as f64),
                BinningScheme::EqualMass if count[i] > 0 => (lo[i], hi[i]),
                BinningScheme::EqualMass => (0.0, 0.0),
            };
            let (mean_confidence, mean_accuracy) = if count[i] == 0 {
                (0.0, 0.0)
            } else {
                (sum[i] / count[i] as f64, correct[i] as f64 / count[i] as f64)
            };
            Bin {
                lower,
                upper,
                count: count[i],
                correct: correct[i],
                mean_confidence,
                mean_accuracy,
            }
        })
        .collect();
    BinStats {
        bins,
        total: values.len(),
    }
}

/// Assigns each example of the view to a bin and collects per-bin statistics.
pub fn bin_assign(view: &TopLabelView, spec: BinningSpec) -> Result<(Vec<usize>, BinStats)> {
    let assignment = assign_bins(&view.confidence, spec)?;
    let stats = bin_stats(&view.confidence, &view.correct, &assignment, spec);
    Ok((assignment, stats))
}
