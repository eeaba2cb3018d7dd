//! Manifest evaluation and the JSON report.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{load_id_list, load_predictions};
use super::manifest::{EvalConfig, Manifest, TemperaturePolicy};
use crate::analysis::{fit_power_law, pareto_front, residualize, LinearResiduals, PowerLawFit};
use crate::biaslab::VARIANCE_CONVENTION;
use crate::error::{Error, Result};
use crate::metrics::{brier, ece, nll, reliability_data, ReliabilityData, NLL_CLAMP};
use crate::predictions::{top_label_view, PredictionSet, SIMPLEX_TOLERANCE};
use crate::recal::{
    apply_temperature, confidence_factor, fit_temperature, restrict_logits, split_holdout, ConfidenceBias,
    FitDiagnostics, Temperature, LOG_T_TOLERANCE, T_MAX, T_MIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub error: f64,
    pub ece: f64,
    pub nll: f64,
    pub brier: f64,
}

impl MetricSet {
    pub fn compute(preds: &PredictionSet, config: &EvalConfig) -> Result<Self> {
        Ok(Self {
            error: top_label_view(preds).error_rate(),
            ece: ece(preds, &config.ece)?,
            nll: nll(preds),
            brier: brier(preds),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureSource {
    None,
    Fitted,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedTemperature {
    pub source: TemperatureSource,
    pub value: f64,
    pub diagnostics: Option<FitDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    /// Position in the manifest.
    pub index: usize,
    pub model_name: String,
    pub dataset_name: String,
    pub family: String,
    pub n_loaded: usize,
    pub n_excluded: usize,
    pub n_fit: usize,
    pub n_eval: usize,
    pub k: usize,
    pub unscaled: MetricSet,
    pub scaled: MetricSet,
    pub temperature: AppliedTemperature,
    /// Temperature fitted on the evaluation set itself.
    pub confidence_factor: Temperature,
    pub confidence_bias: ConfidenceBias,
    pub reliability: ReliabilityData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryFailure {
    pub index: usize,
    pub model_name: String,
    pub dataset_name: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub nll: Option<LinearResiduals>,
    pub brier: Option<LinearResiduals>,
    pub note: Option<String>,
}

/// Cross-model summary for one dataset; indices refer to `Report::entries`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub dataset_name: String,
    pub entries: Vec<usize>,
    pub pareto_unscaled: Vec<usize>,
    pub pareto_scaled: Vec<usize>,
    /// Unscaled NLL and Brier after regressing out classification error.
    pub residuals: Residuals,
}

/// ECE against classification error across one family's entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPowerLaw {
    pub family: String,
    pub entries: Vec<usize>,
    pub fit: Option<PowerLawFit>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub temperature: String,
    pub temperature_bounds: (f64, f64),
    pub log_temperature_tolerance: f64,
    pub nll_clamp: f64,
    pub brier_range: String,
    pub simplex_tolerance: f64,
    pub variance: String,
    pub binning: String,
    pub split: String,
    pub bootstrap: String,
    pub rng: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            temperature: "p = softmax(z / T); T > 1 softens, fitted T > 1 means overconfident".into(),
            temperature_bounds: (T_MIN, T_MAX),
            log_temperature_tolerance: LOG_T_TOLERANCE,
            nll_clamp: NLL_CLAMP,
            brier_range: "sum over classes, range [0, 2]".into(),
            simplex_tolerance: SIMPLEX_TOLERANCE,
            variance: VARIANCE_CONVENTION.into(),
            binning: "equal-width index min(floor(c m), m - 1); equal-mass stable sort by (value, index), first n mod m bins one larger".into(),
            split: "exclusions first, then ChaCha20 shuffle; first floor(f n) shuffled indices fit, both parts kept in file order".into(),
            bootstrap: "percentile interval from type-7 quantiles, widened to contain the point estimate".into(),
            rng: "ChaCha20 seeded with seed_from_u64(seed); resample b uses stream b".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    /// Resolved manifest; re-running it reproduces this report.
    pub manifest: Manifest,
    pub conventions: Conventions,
    pub entries: Vec<EntryReport>,
    pub failures: Vec<EntryFailure>,
    pub datasets: Vec<DatasetSummary>,
    pub power_laws: Vec<FamilyPowerLaw>,
}

/// Loads entry `index`, applies exclusions and the class subset.
pub fn prepare_entry(manifest: &Manifest, index: usize) -> Result<(PredictionSet, usize, usize)> {
    let entry = &manifest.entries[index];
    let preds = load_predictions(&manifest.resolve(&entry.path), entry.format)?;
    let n_loaded = preds.len();
    let preds = match &entry.exclusion_id_file {
        None => preds,
        Some(file) => {
            let excluded = load_id_list(&manifest.resolve(file))?;
            let ids = preds.example_ids().ok_or_else(|| {
                Error::InvalidArgument(format!("{} has no id column to match exclusions against", entry.path.display()))
            })?;
            let keep: Vec<usize> = (0..ids.len()).filter(|&j| !excluded.contains(&ids[j])).collect();
            preds.select(&keep)?
        }
    };
    let n_excluded = n_loaded - preds.len();
    let preds = match &manifest.config.class_subset {
        None => preds,
        Some(keep) => restrict_logits(&preds, keep)?,
    };
    Ok((preds, n_loaded, n_excluded))
}

pub fn evaluate_entry(manifest: &Manifest, index: usize) -> Result<EntryReport> {
    let cfg = &manifest.config;
    let entry = &manifest.entries[index];
    let (preds, n_loaded, n_excluded) = prepare_entry(manifest, index)?;
    let (fit_set, eval) = match cfg.temperature_policy {
        TemperaturePolicy::FitOnSplit => {
            let (fit, eval) = split_holdout(&preds, cfg.split_fraction, cfg.seed)?;
            (Some(fit), eval)
        }
        _ => (None, preds),
    };
    let temperature = match (cfg.temperature_policy, &fit_set) {
        (TemperaturePolicy::FitOnSplit, Some(fit)) => {
            let t = fit_temperature(fit)?;
            AppliedTemperature {
                source: TemperatureSource::Fitted,
                value: t.value,
                diagnostics: Some(t.diagnostics),
            }
        }
        (TemperaturePolicy::Fixed { temperature }, _) => AppliedTemperature {
            source: TemperatureSource::Fixed,
            value: temperature,
            diagnostics: None,
        },
        _ => AppliedTemperature {
            source: TemperatureSource::None,
            value: 1.0,
            diagnostics: None,
        },
    };
    let unscaled = MetricSet::compute(&eval, cfg)?;
    let scaled = MetricSet::compute(&apply_temperature(&eval, temperature.value)?, cfg)?;
    let factor = confidence_factor(&eval)?;
    Ok(EntryReport {
        index,
        model_name: entry.model_name.clone(),
        dataset_name: entry.dataset_name.clone(),
        family: entry.family_key().to_string(),
        n_loaded,
        n_excluded,
        n_fit: fit_set.as_ref().map_or(0, PredictionSet::len),
        n_eval: eval.len(),
        k: eval.num_classes(),
        unscaled,
        scaled,
        temperature,
        confidence_factor: factor,
        confidence_bias: factor.confidence_bias(),
        reliability: reliability_data(&eval, cfg.ece.binning, cfg.reliability_hist_bins)?,
    })
}

fn residual_summary(entries: &[&EntryReport]) -> Residuals {
    let x: Vec<f64> = entries.iter().map(|e| e.unscaled.error).collect();
    let nll: Vec<f64> = entries.iter().map(|e| e.unscaled.nll).collect();
    let brier: Vec<f64> = entries.iter().map(|e| e.unscaled.brier).collect();
    match (residualize(&x, &nll), residualize(&x, &brier)) {
        (Ok(a), Ok(b)) => Residuals {
            nll: Some(a),
            brier: Some(b),
            note: None,
        },
        (Err(e), _) | (_, Err(e)) => Residuals {
            nll: None,
            brier: None,
            note: Some(e.to_string()),
        },
    }
}

fn dataset_summaries(entries: &[EntryReport]) -> Vec<DatasetSummary> {
    let mut order: Vec<&str> = Vec::new();
    for e in entries {
        if !order.contains(&e.dataset_name.as_str()) {
            order.push(&e.dataset_name);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let members: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].dataset_name == name).collect();
            let front = |pick: fn(&EntryReport) -> (f64, f64)| -> Vec<usize> {
                let pts: Vec<(f64, f64)> = members.iter().map(|&i| pick(&entries[i])).collect();
                pareto_front(&pts).into_iter().map(|p| members[p]).collect()
            };
            let refs: Vec<&EntryReport> = members.iter().map(|&i| &entries[i]).collect();
            DatasetSummary {
                dataset_name: name.to_string(),
                pareto_unscaled: front(|e| (e.unscaled.error, e.unscaled.ece)),
                pareto_scaled: front(|e| (e.scaled.error, e.scaled.ece)),
                residuals: residual_summary(&refs),
                entries: members,
            }
        })
        .collect()
}

fn power_laws(entries: &[EntryReport], cfg: &EvalConfig) -> Vec<FamilyPowerLaw> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        groups.entry(&e.family).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(family, members)| {
            let pts: Vec<(f64, f64)> = members
                .iter()
                .map(|&i| (entries[i].unscaled.error, entries[i].unscaled.ece))
                .collect();
            let (fit, note) = match fit_power_law(&pts, cfg.bootstrap_resamples, cfg.seed) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            FamilyPowerLaw {
                family: family.to_string(),
                entries: members,
                fit,
                note,
            }
        })
        .collect()
}

/// Evaluates every entry; failures are recorded, never fatal.
pub fn evaluate_manifest(manifest: &Manifest) -> Report {
    let outcomes: Vec<Result<EntryReport>> = (0..manifest.entries.len())
        .into_par_iter()
        .map(|i| evaluate_entry(manifest, i))
        .collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (index, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => entries.push(r),
            Err(e) => {
                let entry = &manifest.entries[index];
                failures.push(EntryFailure {
                    index,
                    model_name: entry.model_name.clone(),
                    dataset_name: entry.dataset_name.clone(),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    Report {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        manifest: manifest.resolved(),
        conventions: Conventions::default(),
        datasets: dataset_summaries(&entries),
        power_laws: power_laws(&entries, &manifest.config),
        entries,
        failures,
    }
}

/// As [`evaluate_manifest`], but an error when no entry succeeds.
pub fn run_evaluate(manifest: &Manifest) -> Result<Report> {
    manifest.validate()?;
    let report = evaluate_manifest(manifest);
    if report.entries.is_empty() {
        return Err(Error::AllEntriesFailed);
    }
    Ok(report)
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn entry(&self, model: &str, dataset: &str) -> Option<&EntryReport> {
        self.entries.iter().find(|e| e.model_name == model && e.dataset_name == dataset)
    }
}
