//! Calibration measurement for classifier prediction dumps.
//!
//! The crate covers binned calibration-error estimators (top-label,
//! class-wise, all-label; l1, l2, RMS), proper scoring rules, temperature
//! scaling, Monte Carlo checks of the squared-estimator bias, selective
//! prediction cost planes and cross-model regression helpers. The `harness`
//! module ties them together behind a manifest-driven evaluation protocol
//! and the `calibkit` binary.

pub mod analysis;
pub mod biaslab;
pub mod binning;
pub mod decision;
pub mod error;
pub mod harness;
pub mod metrics;
mod numeric;
pub mod predictions;
pub mod recal;
pub mod synth;

pub use binning::{bin_assign, BinStats, BinningScheme, BinningSpec};
pub use error::{Error, Result};
pub use metrics::{brier, ece, nll, reliability_data, Aggregation, EceConfig, Norm, ReliabilityData};
pub use predictions::{top_label_view, PredictionSet, ScoreKind, TopLabelView};
pub use recal::{apply_temperature, fit_temperature, probabilities_of, Temperature};
