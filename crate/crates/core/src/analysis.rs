//! Cross-model regressions: log-log power laws with bootstrap intervals,
//! linear residualization and accuracy/calibration Pareto fronts.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::trial_rng;

pub const DEFAULT_RESAMPLES: usize = 2000;
pub const CONFIDENCE_LEVEL: f64 = 0.95;

/// `y = a * x^k`, fitted by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub k: f64,
    pub a_interval: (f64, f64),
    pub k_interval: (f64, f64),
    pub resamples: usize,
    pub seed: u64,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.a * x.powf(self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearResiduals {
    pub intercept: f64,
    pub slope: f64,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares with intercept; `None` when all `x` coincide.
fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

pub fn residualize(x: &[f64], y: &[f64]) -> Result<LinearResiduals> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} x values but {} y values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Underdetermined(format!("{} points, need at least 2", x.len())));
    }
    let (intercept, slope) =
        ols(x, y).ok_or_else(|| Error::Underdetermined("all x values are equal".into()))?;
    let residuals = x.iter().zip(y).map(|(&xi, &yi)| yi - (intercept + slope * xi)).collect();
    Ok(LinearResiduals { intercept, slope, residuals })
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn percentile_interval(mut draws: Vec<f64>, estimate: f64) -> (f64, f64) {
    draws.sort_by(f64::total_cmp);
    let tail = (1.0 - CONFIDENCE_LEVEL) / 2.0;
    let lo = quantile(&draws, tail).min(estimate);
    let hi = quantile(&draws, 1.0 - tail).max(estimate);
    (lo, hi)
}

pub fn fit_power_law(points: &[(f64, f64)], resamples: usize, seed: u64) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::Underdetermined(format!("{} points, need at least 3", points.len())));
    }
    if let Some(index) = points.iter().position(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::NonPositiveCoordinate { index });
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (intercept, k) =
        ols(&lx, &ly).ok_or_else(|| Error::Underdetermined("all x values are equal".into()))?;

    let n = points.len();
    let draws: Vec<(f64, f64)> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = trial_rng(seed, b as u64);
            let (mut bx, mut by) = (vec![0.0; n], vec![0.0; n]);
            // degenerate resamples with a single distinct x are redrawn
            loop {
                for i in 0..n {
                    let j = rng.random_range(0..n);
                    bx[i] = lx[j];
                    by[i] = ly[j];
                }
                if let Some(fit) = ols(&bx, &by) {
                    return fit;
                }
            }
        })
        .collect();
    let a_draws = draws.iter().map(|d| d.0.exp()).collect();
    let k_draws = draws.iter().map(|d| d.1).collect();
    let a = intercept.exp();
    Ok(PowerLawFit {
        a,
        k,
        a_interval: percentile_interval(a_draws, a),
        k_interval: percentile_interval(k_draws, k),
        resamples,
        seed,
    })
}

fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    p.0 <= q.0 && p.1 <= q.1 && (p.0 < q.0 || p.1 < q.1)
}

/// Indices of points not dominated in (error, calibration error), ascending.
pub fn pareto_front(models: &[(f64, f64)]) -> Vec<usize> {
    (0..models.len())
        .filter(|&i| !models.iter().any(|&q| dominates(q, models[i])))
        .collect()
}
