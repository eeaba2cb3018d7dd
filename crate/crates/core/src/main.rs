use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use calibkit::analysis::{fit_power_law, DEFAULT_RESAMPLES};
use calibkit::biaslab::bias_vs_bins_study;
use calibkit::decision::{cost_plane, linear_grid};
use calibkit::harness::io::load_points;
use calibkit::harness::plot::{cost_plane_csv, reliability_csv, summary_csv};
use calibkit::harness::report::MetricSet;
use calibkit::harness::{
    default_out_dir, emit_cost_plane, emit_reliability, emit_report, evaluate_manifest, load_predictions,
    write_predictions, EvalConfig, Manifest, PredictionFormat,
};
use calibkit::recal::{apply_temperature, fit_temperature, logits_of, split_holdout, Temperature};
use calibkit::synth::{generate, ConfidenceLaw, GeneratorSpec};
use calibkit::{reliability_data, top_label_view, BinningScheme, BinningSpec, Error, Result};

#[derive(Parser)]
#[command(name = "calibkit", version, about = "Calibration measurement for classifier prediction dumps")]
struct Cli {
    /// Output directory [default: calibkit-out]
    #[arg(long, global = true, env = "CALIBKIT_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Format of the result printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    /// Overrides every seed used by the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputKind {
    Logits,
    Probs,
}

impl From<InputKind> for PredictionFormat {
    fn from(k: InputKind) -> Self {
        match k {
            InputKind::Logits => PredictionFormat::CsvLogits,
            InputKind::Probs => PredictionFormat::CsvProbs,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    EqualMass,
    EqualWidth,
}

impl From<Scheme> for BinningScheme {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::EqualMass => BinningScheme::EqualMass,
            Scheme::EqualWidth => BinningScheme::EqualWidth,
        }
    }
}

#[derive(Args)]
struct Input {
    /// Score columns hold logits or probabilities.
    #[arg(long, value_enum, default_value_t = InputKind::Logits)]
    kind: InputKind,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every entry of a manifest and write the report.
    Evaluate { manifest: PathBuf },
    /// Fit a temperature on a held-out split and write rescaled logits.
    Recalibrate {
        preds: PathBuf,
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.2)]
        fraction: f64,
        #[arg(long, default_value_t = 15)]
        bins: usize,
    },
    /// Mean plug-in l1 ECE against bin count on a calibrated generator.
    BiasStudy {
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
        bins: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = Scheme::EqualMass)]
        scheme: Scheme,
        /// Generator spec JSON; defaults to C ~ Uniform[0.5, 1) with 2 classes.
        #[arg(long)]
        generator: Option<PathBuf>,
    },
    /// Relative selective-prediction cost of two models.
    CostPlane {
        preds_a: PathBuf,
        preds_b: PathBuf,
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.0)]
        rho_min: f64,
        #[arg(long, default_value_t = 1.0)]
        rho_max: f64,
        #[arg(long, default_value_t = 11)]
        rho_points: usize,
        #[arg(long, default_value_t = 11)]
        r_points: usize,
    },
    /// Fit y = a x^k to an `x,y` CSV.
    FitPowerlaw {
        points: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
    },
    /// Reliability diagram data for one prediction file.
    Reliability {
        preds: PathBuf,
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 15)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = Scheme::EqualWidth)]
        scheme: Scheme,
        #[arg(long, default_value_t = 20)]
        hist_bins: usize,
    },
    /// Write a synthetic prediction file from a generator spec.
    Synth {
        spec: PathBuf,
        /// Number of examples; overrides `n` in the spec file.
        #[arg(long)]
        n: Option<usize>,
        /// Output file; defaults to `<out-dir>/synth.csv`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Generator spec plus an optional example count.
#[derive(Deserialize)]
struct SynthFile {
    #[serde(flatten)]
    generator: GeneratorSpec,
    n: Option<usize>,
}

#[derive(Serialize)]
struct RecalibrationOutput {
    temperature: Temperature,
    n_fit: usize,
    n_eval: usize,
    before: MetricSet,
    after: MetricSet,
    output: PathBuf,
}

#[derive(Serialize)]
struct Written<T: Serialize> {
    result: T,
    files: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            ExitCode::FAILURE
        }
    }
}

fn report_error(e: &Error) {
    let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{body}");
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let out_dir = cli.out_dir.clone().unwrap_or_else(default_out_dir);
    match &cli.command {
        Command::Evaluate { manifest } => {
            let mut m = Manifest::load(manifest)?;
            if let Some(seed) = cli.seed {
                m.config.seed = seed;
            }
            m.validate()?;
            let report = evaluate_manifest(&m);
            emit_report(&report, &out_dir)?;
            if report.entries.is_empty() {
                let failures: Vec<_> = report
                    .failures
                    .iter()
                    .map(|f| serde_json::json!({ "model_name": f.model_name, "dataset_name": f.dataset_name, "kind": f.kind, "message": f.message }))
                    .collect();
                let e = Error::AllEntriesFailed;
                eprintln!(
                    "{}",
                    serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string(), "failures": failures } })
                );
                return Ok(ExitCode::FAILURE);
            }
            match cli.format {
                OutputFormat::Json => println!("{}", report.to_json()?),
                OutputFormat::Csv => print!("{}", summary_csv(&report)),
            }
            for f in &report.failures {
                eprintln!("{}", serde_json::json!({ "warning": { "kind": f.kind, "message": f.message } }));
            }
        }
        Command::Recalibrate {
            preds,
            input,
            fraction,
            bins,
        } => {
            let p = load_predictions(preds, input.kind.into())?;
            let seed = cli.seed.unwrap_or(EvalConfig::default().seed);
            let (fit, eval) = split_holdout(&p, *fraction, seed)?;
            let t = fit_temperature(&fit)?;
            let cfg = EvalConfig {
                ece: calibkit::EceConfig {
                    binning: BinningSpec::equal_mass((*bins).min(eval.len()))?,
                    ..Default::default()
                },
                ..Default::default()
            };
            let before = MetricSet::compute(&eval, &cfg)?;
            let after = MetricSet::compute(&apply_temperature(&eval, t.value)?, &cfg)?;
            let stem = preds.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
            let output = out_dir.join(format!("{stem}_scaled.csv"));
            let scaled = logits_of(&apply_temperature(&p, t.value)?);
            write_predictions(&scaled, &output)?;
            let out = RecalibrationOutput {
                temperature: t,
                n_fit: fit.len(),
                n_eval: eval.len(),
                before,
                after,
                output,
            };
            match cli.format {
                OutputFormat::Json => print_json(&out)?,
                OutputFormat::Csv => {
                    println!("temperature,n_fit,n_eval,ece_before,ece_after,nll_before,nll_after,brier_before,brier_after");
                    println!(
                        "{},{},{},{},{},{},{},{},{}",
                        t.value, out.n_fit, out.n_eval, before.ece, after.ece, before.nll, after.nll, before.brier, after.brier
                    );
                }
            }
        }
        Command::BiasStudy {
            bins,
            n,
            trials,
            scheme,
            generator,
        } => {
            let mut gen = match generator {
                Some(path) => read_json::<GeneratorSpec>(path)?,
                None => GeneratorSpec::calibrated(ConfidenceLaw::Uniform { lo: 0.5, hi: 1.0 }, 2, 0),
            };
            if let Some(seed) = cli.seed {
                gen.seed = seed;
            }
            let rows = bias_vs_bins_study(&gen, (*scheme).into(), *n, bins, *trials, gen.seed)?;
            match cli.format {
                OutputFormat::Json => print_json(&serde_json::json!({
                    "generator": gen,
                    "n": n,
                    "trials": trials,
                    "rows": rows,
                }))?,
                OutputFormat::Csv => {
                    println!("bins,mean,stderr");
                    for r in &rows {
                        println!("{},{},{}", r.bins, r.mean, r.stderr);
                    }
                }
            }
        }
        Command::CostPlane {
            preds_a,
            preds_b,
            input,
            rho_min,
            rho_max,
            rho_points,
            r_points,
        } => {
            let a = load_predictions(preds_a, input.kind.into())?;
            let b = load_predictions(preds_b, input.kind.into())?;
            let name = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
            let plane = cost_plane(
                &top_label_view(&a),
                &top_label_view(&b),
                &linear_grid(*rho_min, *rho_max, *rho_points),
                &linear_grid(0.0, 1.0, *r_points),
            )?
            .with_names(name(preds_a), name(preds_b));
            let files = emit_cost_plane(&plane, &out_dir, &format!("{}_vs_{}", plane.model_a, plane.model_b))?;
            match cli.format {
                OutputFormat::Json => print_json(&Written { result: &plane, files })?,
                OutputFormat::Csv => print!("{}", cost_plane_csv(&plane)),
            }
        }
        Command::FitPowerlaw { points, resamples } => {
            let pts = load_points(points)?;
            let fit = fit_power_law(&pts, *resamples, cli.seed.unwrap_or(0))?;
            match cli.format {
                OutputFormat::Json => print_json(&fit)?,
                OutputFormat::Csv => {
                    println!("a,k,a_lo,a_hi,k_lo,k_hi,resamples,seed");
                    println!(
                        "{},{},{},{},{},{},{},{}",
                        fit.a, fit.k, fit.a_interval.0, fit.a_interval.1, fit.k_interval.0, fit.k_interval.1, fit.resamples, fit.seed
                    );
                }
            }
        }
        Command::Reliability {
            preds,
            input,
            bins,
            scheme,
            hist_bins,
        } => {
            let p = load_predictions(preds, input.kind.into())?;
            let data = reliability_data(&p, BinningSpec::new((*scheme).into(), *bins)?, *hist_bins)?;
            let stem = preds.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
            let files = emit_reliability(&data, &out_dir, stem)?;
            match cli.format {
                OutputFormat::Json => print_json(&Written { result: &data, files })?,
                OutputFormat::Csv => print!("{}", reliability_csv(&data)),
            }
        }
        Command::Synth { spec, n, output } => {
            let file: SynthFile = read_json(spec)?;
            let mut gen = file.generator;
            if let Some(seed) = cli.seed {
                gen.seed = seed;
            }
            let n = n.or(file.n).unwrap_or(10_000);
            let preds = generate(&gen, n)?;
            let path = output.clone().unwrap_or_else(|| out_dir.join("synth.csv"));
            write_predictions(&preds, &path)?;
            let summary = serde_json::json!({
                "output": path,
                "format": PredictionFormat::of(preds.kind()),
                "n": preds.len(),
                "k": preds.num_classes(),
                "generator": gen,
            });
            match cli.format {
                OutputFormat::Json => print_json(&summary)?,
                OutputFormat::Csv => println!("{}", path.display()),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
