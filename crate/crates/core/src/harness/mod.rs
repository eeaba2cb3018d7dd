//! File formats, the manifest evaluation protocol and plot-data emission.

pub mod io;
pub mod manifest;
pub mod plot;
pub mod report;

pub use io::{load_predictions, write_predictions, PredictionFormat};
pub use manifest::{EvalConfig, Manifest, ManifestEntry, TemperaturePolicy};
pub use plot::{default_out_dir, emit_cost_plane, emit_reliability, emit_report};
pub use report::{evaluate_entry, evaluate_manifest, run_evaluate, EntryReport, Report};
