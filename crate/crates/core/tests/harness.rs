//! Manifest evaluation end to end, on files written to a temporary directory.

use std::fs;
use std::path::Path;

use serde_json::Value;

use calibkit::harness::report::{prepare_entry, MetricSet, TemperatureSource};
use calibkit::harness::{
    emit_report, evaluate_entry, evaluate_manifest, run_evaluate, write_predictions, EvalConfig, Manifest,
    ManifestEntry, PredictionFormat, Report, TemperaturePolicy,
};
use calibkit::recal::{restrict_logits, split_holdout};
use calibkit::synth::{generate, ConfidenceLaw, GeneratorSpec};
use calibkit::{apply_temperature, fit_temperature, top_label_view, BinningSpec, EceConfig, Error, Norm, PredictionSet};

fn spec(seed: u64, t: f64) -> GeneratorSpec {
    GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.3, hi: 1.0 }, 4, seed).distorted(t)
}

fn write_set(dir: &Path, name: &str, gen: &GeneratorSpec, n: usize) -> PredictionSet {
    let preds = generate(gen, n).unwrap();
    write_predictions(&preds, &dir.join(name)).unwrap();
    preds
}

fn entry(model: &str, dataset: &str, path: &str) -> ManifestEntry {
    ManifestEntry {
        model_name: model.into(),
        dataset_name: dataset.into(),
        path: path.into(),
        format: PredictionFormat::CsvLogits,
        exclusion_id_file: None,
        family: None,
    }
}

fn config(policy: TemperaturePolicy) -> EvalConfig {
    EvalConfig {
        ece: EceConfig::top_label(BinningSpec::equal_mass(10).unwrap(), Norm::L1),
        temperature_policy: policy,
        seed: 9,
        bootstrap_resamples: 200,
        ..EvalConfig::default()
    }
}

/// Three models on two datasets, written under `dir`.
fn fixture(dir: &Path, policy: TemperaturePolicy) -> Manifest {
    let mut entries = Vec::new();
    for (i, t) in [0.7, 1.0, 1.6].into_iter().enumerate() {
        for (d, dataset) in ["alpha", "beta"].into_iter().enumerate() {
            let name = format!("m{i}_{dataset}.csv");
            write_set(dir, &name, &spec(10 * i as u64 + d as u64, t), 2000);
            let mut e = entry(&format!("m{i}"), dataset, &name);
            e.family = Some("fam".into());
            entries.push(e);
        }
    }
    Manifest::new(entries, config(policy), dir)
}

fn bits(m: &MetricSet) -> [u64; 4] {
    [m.error.to_bits(), m.ece.to_bits(), m.nll.to_bits(), m.brier.to_bits()]
}

#[test]
fn fit_on_split_rescales_without_changing_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    let report = run_evaluate(&m).unwrap();
    assert_eq!(report.entries.len(), 6);
    assert!(report.failures.is_empty());
    for e in &report.entries {
        assert_eq!(e.temperature.source, TemperatureSource::Fitted);
        assert!(e.temperature.diagnostics.is_some());
        assert_eq!(e.n_fit, 400);
        assert_eq!(e.n_eval, 1600);
        assert_eq!(e.unscaled.error, e.scaled.error);
        if e.model_name != "m1" {
            assert!(e.scaled.nll < e.unscaled.nll, "{} {}", e.model_name, e.dataset_name);
        }
    }
    let over = report.entry("m2", "alpha").unwrap();
    assert!(over.temperature.value > 1.2, "fitted {}", over.temperature.value);
    assert!(over.confidence_factor.value > 1.2);
}

#[test]
fn fixed_unit_temperature_leaves_metrics_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::Fixed { temperature: 1.0 });
    let report = run_evaluate(&m).unwrap();
    for e in &report.entries {
        assert_eq!(e.temperature.source, TemperatureSource::Fixed);
        assert_eq!(e.n_fit, 0);
        assert_eq!(e.n_eval, 2000);
        assert_eq!(bits(&e.unscaled), bits(&e.scaled));
    }
}

#[test]
fn no_policy_scores_the_whole_set() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::None);
    let report = run_evaluate(&m).unwrap();
    for e in &report.entries {
        assert_eq!(e.temperature.source, TemperatureSource::None);
        assert_eq!(e.temperature.value, 1.0);
        assert_eq!((e.n_fit, e.n_eval), (0, 2000));
        assert_eq!(bits(&e.unscaled), bits(&e.scaled));
    }
}

#[test]
fn fixed_temperature_matches_direct_rescaling() {
    let dir = tempfile::tempdir().unwrap();
    let preds = write_set(dir.path(), "p.csv", &spec(5, 1.4), 1500);
    let cfg = config(TemperaturePolicy::Fixed { temperature: 1.4 });
    let m = Manifest::new(vec![entry("a", "d", "p.csv")], cfg.clone(), dir.path());
    let e = evaluate_entry(&m, 0).unwrap();
    let direct = MetricSet::compute(&apply_temperature(&preds, 1.4).unwrap(), &cfg).unwrap();
    assert_eq!(bits(&e.scaled), bits(&direct));
}

#[test]
fn exclusions_apply_before_the_split() {
    let dir = tempfile::tempdir().unwrap();
    let preds = write_set(dir.path(), "p.csv", &spec(3, 1.2), 1000);
    let dropped: Vec<usize> = (0..1000).filter(|j| j % 7 == 0).collect();
    let ids: String = dropped.iter().map(|j| format!("{j}\n")).collect();
    fs::write(dir.path().join("drop.txt"), format!("\n{ids}\nnot-an-id\n")).unwrap();
    let mut e = entry("a", "d", "p.csv");
    e.exclusion_id_file = Some("drop.txt".into());
    let cfg = config(TemperaturePolicy::FitOnSplit);
    let m = Manifest::new(vec![e], cfg.clone(), dir.path());

    let report = evaluate_entry(&m, 0).unwrap();
    assert_eq!(report.n_loaded, 1000);
    assert_eq!(report.n_excluded, dropped.len());
    assert_eq!(report.n_fit + report.n_eval, 1000 - dropped.len());

    let keep: Vec<usize> = (0..1000).filter(|j| j % 7 != 0).collect();
    let kept = preds.select(&keep).unwrap();
    let (fit, eval) = split_holdout(&kept, cfg.split_fraction, cfg.seed).unwrap();
    let t = fit_temperature(&fit).unwrap();
    assert_eq!(report.temperature.value.to_bits(), t.value.to_bits());
    assert_eq!(bits(&report.unscaled), bits(&MetricSet::compute(&eval, &cfg).unwrap()));
}

#[test]
fn exclusions_need_an_id_column() {
    let dir = tempfile::tempdir().unwrap();
    let preds = generate(&spec(3, 1.0), 200).unwrap();
    let rows: Vec<Vec<f64>> = preds.rows().map(<[f64]>::to_vec).collect();
    let bare = PredictionSet::from_rows(&rows, preds.kind(), preds.labels().to_vec()).unwrap();
    write_predictions(&bare, &dir.path().join("p.csv")).unwrap();
    fs::write(dir.path().join("drop.txt"), "1\n").unwrap();
    let mut e = entry("a", "d", "p.csv");
    e.exclusion_id_file = Some("drop.txt".into());
    let m = Manifest::new(vec![e], config(TemperaturePolicy::None), dir.path());
    assert!(matches!(evaluate_entry(&m, 0), Err(Error::InvalidArgument(_))));
}

#[test]
fn class_subset_restricts_logits() {
    let dir = tempfile::tempdir().unwrap();
    let preds = write_set(dir.path(), "p.csv", &spec(4, 1.0), 3000);
    let mut cfg = config(TemperaturePolicy::None);
    cfg.class_subset = Some(vec![2, 0, 1, 3]);
    let m = Manifest::new(vec![entry("a", "d", "p.csv")], cfg.clone(), dir.path());
    let (prepared, _, _) = prepare_entry(&m, 0).unwrap();
    assert_eq!(prepared, restrict_logits(&preds, &[2, 0, 1, 3]).unwrap());
    let e = evaluate_entry(&m, 0).unwrap();
    assert_eq!(e.k, 4);
    assert_eq!(e.unscaled.error, top_label_view(&preds).error_rate());

    cfg.class_subset = Some(vec![0, 1]);
    let m = Manifest::new(vec![entry("a", "d", "p.csv")], cfg, dir.path());
    let err = evaluate_entry(&m, 0).unwrap_err();
    assert_eq!(err.kind(), "LabelNotInSubset");
}

#[test]
fn failures_are_collected_per_entry() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    m.entries.insert(1, entry("ghost", "alpha", "missing.csv"));
    fs::write(dir.path().join("broken.csv"), "label,s_0,s_1\n0,0.1\n").unwrap();
    m.entries.push(entry("broken", "beta", "broken.csv"));
    let report = evaluate_manifest(&m);
    assert_eq!(report.entries.len(), 6);
    let kinds: Vec<(usize, &str)> = report.failures.iter().map(|f| (f.index, f.kind.as_str())).collect();
    assert_eq!(kinds, vec![(1, "IoError"), (7, "ParseError")]);
    let order: Vec<usize> = report.entries.iter().map(|e| e.index).collect();
    assert_eq!(order, vec![0, 2, 3, 4, 5, 6]);
}

#[test]
fn all_failures_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = Manifest::new(
        vec![entry("a", "d", "nope.csv"), entry("b", "d", "nada.csv")],
        EvalConfig::default(),
        dir.path(),
    );
    assert!(matches!(run_evaluate(&m), Err(Error::AllEntriesFailed)));
    assert_eq!(evaluate_manifest(&m).failures.len(), 2);
}

#[test]
fn report_entries_match_single_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    let report = evaluate_manifest(&m);
    for (i, e) in report.entries.iter().enumerate() {
        assert_eq!(e, &evaluate_entry(&m, i).unwrap());
    }
}

#[test]
fn summaries_group_by_dataset_and_family() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    let report = run_evaluate(&m).unwrap();
    let names: Vec<&str> = report.datasets.iter().map(|d| d.dataset_name.as_str()).collect();
    assert_eq!(names, vec!["alpha", "beta"]);
    assert_eq!(report.datasets[0].entries, vec![0, 2, 4]);
    for d in &report.datasets {
        assert!(!d.pareto_unscaled.is_empty());
        assert!(d.pareto_unscaled.iter().all(|i| d.entries.contains(i)));
        let res = d.residuals.nll.as_ref().unwrap();
        assert_eq!(res.residuals.len(), 3);
        assert!(res.residuals.iter().sum::<f64>().abs() < 1e-9);
    }
    assert_eq!(report.power_laws.len(), 1);
    assert_eq!(report.power_laws[0].family, "fam");
    assert_eq!(report.power_laws[0].entries.len(), 6);
}

#[test]
fn report_round_trips_and_reruns_from_elsewhere() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    let report = run_evaluate(&m).unwrap();
    let back = Report::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    assert!(report.manifest.entries.iter().all(|e| e.path.is_absolute()));

    let echo = serde_json::to_string(&report.manifest).unwrap();
    let again = Manifest::from_json(&echo, "/").unwrap();
    assert_eq!(evaluate_manifest(&again), report);
}

#[test]
fn invalid_manifests_are_rejected() {
    for text in [
        r#"{"entries": []}"#,
        r#"{"entries": [{"model_name": "a"}]}"#,
        r#"{"entries": [{"model_name": "a", "dataset_name": "d", "path": "p", "format": "csv_logits"}], "config": {"split_fraction": 1.0}}"#,
        r#"{"entries": [{"model_name": "a", "dataset_name": "d", "path": "p", "format": "csv_logits"},
                        {"model_name": "a", "dataset_name": "d", "path": "q", "format": "csv_logits"}]}"#,
        r#"{"entries": [{"model_name": "a", "dataset_name": "d", "path": "p", "format": "csv_logits"}],
            "config": {"temperature_policy": {"policy": "fixed", "temperature": -1}}}"#,
    ] {
        assert!(matches!(Manifest::from_json(text, "."), Err(Error::InvalidManifest(_))), "{text}");
    }
}

#[test]
fn emitted_files_are_complete() {
    let dir = tempfile::tempdir().unwrap();
    let m = fixture(dir.path(), TemperaturePolicy::FitOnSplit);
    let report = run_evaluate(&m).unwrap();
    let out = dir.path().join("out");
    let files = emit_report(&report, &out).unwrap();
    assert!(files.contains(&out.join("report.json")));
    assert!(files.contains(&out.join("summary.csv")));
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 7);
    let svgs: Vec<_> = files.iter().filter(|p| p.extension().is_some_and(|x| x == "svg")).collect();
    assert_eq!(svgs.len(), 6);
    for svg in svgs {
        let text = fs::read_to_string(svg).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
    let written = Report::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(written, report);
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn report_validator() -> jsonschema::Validator {
    let manifest = schema("manifest.schema.json");
    let id = manifest["$id"].as_str().unwrap().to_string();
    jsonschema::options()
        .with_resource(id, jsonschema::Resource::from_contents(manifest).unwrap())
        .build(&schema("report.schema.json"))
        .unwrap()
}

fn assert_valid(validator: &jsonschema::Validator, instance: &Value) {
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn reports_conform_to_the_schema() {
    let validator = report_validator();
    for policy in [
        TemperaturePolicy::FitOnSplit,
        TemperaturePolicy::None,
        TemperaturePolicy::Fixed { temperature: 2.0 },
    ] {
        let dir = tempfile::tempdir().unwrap();
        let mut m = fixture(dir.path(), policy);
        m.entries.push(entry("ghost", "gamma", "missing.csv"));
        let report = evaluate_manifest(&m);
        assert_valid(&validator, &serde_json::from_str(&report.to_json().unwrap()).unwrap());
    }
}

#[test]
fn manifests_conform_to_the_schema() {
    let validator = jsonschema::validator_for(&schema("manifest.schema.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut m = fixture(dir.path(), TemperaturePolicy::Fixed { temperature: 1.5 });
    m.config.class_subset = Some(vec![0, 1, 2]);
    m.entries[0].exclusion_id_file = Some("drop.txt".into());
    assert_valid(&validator, &serde_json::to_value(&m).unwrap());
    let bad = serde_json::json!({"entries": [{"model_name": "a", "dataset_name": "d", "path": "p", "format": "npy"}]});
    assert!(!validator.is_valid(&bad));
}
