//! Plot data: CSV tables plus standalone SVG reliability diagrams and
//! cost-plane heatmaps.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::io::write_atomic;
use super::report::Report;
use crate::decision::{format_cell, CostPlane};
use crate::error::Result;
use crate::metrics::ReliabilityData;

pub const OUT_DIR_ENV: &str = "CALIBKIT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "calibkit-out";

/// `$CALIBKIT_OUT_DIR`, or `calibkit-out` in the working directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn reliability_csv(data: &ReliabilityData) -> String {
    let mut s = String::from("bin,lower,upper,count,mean_confidence,mean_accuracy\n");
    for (i, b) in data.bins.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{},{}", b.lower, b.upper, b.count, b.mean_confidence, b.mean_accuracy);
    }
    s
}

pub fn histogram_csv(data: &ReliabilityData) -> String {
    let mut s = String::from("cell,lower,upper,count\n");
    for (i, c) in data.histogram.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{}", c.lower, c.upper, c.count);
    }
    s
}

/// Header row holds the cost-ratio grid; the first column the abstention rates.
pub fn cost_plane_csv(plane: &CostPlane) -> String {
    let mut s = String::from("r\\rho");
    for rho in &plane.cost_ratios {
        let _ = write!(s, ",{rho}");
    }
    s.push('\n');
    for (r, row) in plane.abstention_rates.iter().zip(&plane.relative) {
        let _ = write!(s, "{r}");
        for &v in row {
            let _ = write!(s, ",{}", format_cell(v));
        }
        s.push('\n');
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const W: f64 = 480.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <title>{}</title>\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        escape(title),
        W / 2.0,
        escape(title)
    )
}

/// Accuracy bars per bin with the diagonal and a confidence histogram strip.
pub fn reliability_svg(data: &ReliabilityData, title: &str) -> String {
    let plot = W - 2.0 * MARGIN;
    let x = |v: f64| MARGIN + v * plot;
    let y = |v: f64| H - MARGIN - v * plot;
    let mut s = svg_open(title);
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot}\" height=\"{plot}\" fill=\"none\" stroke=\"black\"/>"
    );
    let peak = data.histogram.iter().map(|c| c.count).max().unwrap_or(0).max(1) as f64;
    for c in &data.histogram {
        let h = 0.15 * plot * c.count as f64 / peak;
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{h:.3}\" fill=\"#cccccc\"/>",
            x(c.lower),
            H - MARGIN - h,
            (c.upper - c.lower) * plot
        );
    }
    for b in data.bins.iter().filter(|b| b.count > 0) {
        let (lo, hi) = if data.is_equal_width() {
            (b.lower, b.upper)
        } else {
            let half = 0.004;
            ((b.mean_confidence - half).max(0.0), (b.mean_confidence + half).min(1.0))
        };
        let _ = writeln!(
            s,
            "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"#3366cc\" fill-opacity=\"0.7\"/>",
            x(lo),
            y(b.mean_accuracy),
            (hi - lo) * plot,
            b.mean_accuracy * plot
        );
        let _ = writeln!(
            s,
            "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2\" fill=\"#cc3333\"/>",
            x(b.mean_confidence),
            y(b.mean_accuracy)
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-dasharray=\"4 3\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(s, "<text x=\"{:.3}\" y=\"{}\" text-anchor=\"middle\">{t}</text>", x(t), H - MARGIN + 16.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.3}\" text-anchor=\"end\">{t}</text>", MARGIN - 6.0, y(t) + 4.0);
    }
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">confidence</text>", W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">accuracy</text>",
        H / 2.0,
        H / 2.0
    );
    s.push_str("</svg>\n");
    s
}

/// Diverging colour on log2 of the ratio: blue favours A, red favours B.
fn ratio_colour(v: f64) -> String {
    if v.is_infinite() {
        return "#7f0000".into();
    }
    let t = (v.max(1e-12).log2() / 2.0).clamp(-1.0, 1.0);
    let (r, g, b) = if t < 0.0 {
        let u = -t;
        (255.0 * (1.0 - u), 255.0 * (1.0 - 0.6 * u), 255.0)
    } else {
        (255.0, 255.0 * (1.0 - 0.8 * t), 255.0 * (1.0 - 0.8 * t))
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

pub fn cost_plane_svg(plane: &CostPlane, title: &str) -> String {
    let plot = W - 2.0 * MARGIN;
    let cols = plane.cost_ratios.len().max(1) as f64;
    let rows = plane.abstention_rates.len().max(1) as f64;
    let (cw, ch) = (plot / cols, plot / rows);
    let mut s = svg_open(title);
    for (i, row) in plane.relative.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            // r grows upwards
            let _ = writeln!(
                s,
                "<rect x=\"{:.3}\" y=\"{:.3}\" width=\"{cw:.3}\" height=\"{ch:.3}\" fill=\"{}\"><title>r={} rho={} ratio={}</title></rect>",
                MARGIN + j as f64 * cw,
                H - MARGIN - (i as f64 + 1.0) * ch,
                ratio_colour(v),
                plane.abstention_rates[i],
                plane.cost_ratios[j],
                format_cell(v)
            );
        }
    }
    let _ = writeln!(
        s,
        "<rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot}\" height=\"{plot}\" fill=\"none\" stroke=\"black\"/>"
    );
    let (first_rho, last_rho) = (plane.cost_ratios[0], plane.cost_ratios[plane.cost_ratios.len() - 1]);
    let (first_r, last_r) = (plane.abstention_rates[0], plane.abstention_rates[plane.abstention_rates.len() - 1]);
    let _ = writeln!(s, "<text x=\"{MARGIN}\" y=\"{}\">{first_rho}</text>", H - MARGIN + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{last_rho}</text>", W - MARGIN, H - MARGIN + 16.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{first_r}</text>", MARGIN - 6.0, H - MARGIN);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{last_r}</text>", MARGIN - 6.0, MARGIN + 10.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">cost ratio</text>", W / 2.0, H - 16.0);
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">abstention rate</text>",
        H / 2.0,
        H / 2.0
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"42\" text-anchor=\"middle\">{}</text>",
        W / 2.0,
        escape(&format!("{} / {}", plane.model_a, plane.model_b))
    );
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>_reliability.csv`, `<stem>_histogram.csv` and `<stem>_reliability.svg`.
pub fn emit_reliability(data: &ReliabilityData, out_dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let files = [
        (format!("{stem}_reliability.csv"), reliability_csv(data)),
        (format!("{stem}_histogram.csv"), histogram_csv(data)),
        (format!("{stem}_reliability.svg"), reliability_svg(data, stem)),
    ];
    write_all(out_dir, &files)
}

/// Writes `<stem>_cost_plane.csv` and `<stem>_cost_plane.svg`.
pub fn emit_cost_plane(plane: &CostPlane, out_dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let files = [
        (format!("{stem}_cost_plane.csv"), cost_plane_csv(plane)),
        (format!("{stem}_cost_plane.svg"), cost_plane_svg(plane, stem)),
    ];
    write_all(out_dir, &files)
}

pub fn summary_csv(report: &Report) -> String {
    let mut s = String::from(
        "model_name,dataset_name,family,n_eval,k,error,ece,nll,brier,temperature,ece_scaled,nll_scaled,brier_scaled,confidence_factor\n",
    );
    for e in &report.entries {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_text(&e.model_name),
            csv_text(&e.dataset_name),
            csv_text(&e.family),
            e.n_eval,
            e.k,
            e.unscaled.error,
            e.unscaled.ece,
            e.unscaled.nll,
            e.unscaled.brier,
            e.temperature.value,
            e.scaled.ece,
            e.scaled.nll,
            e.scaled.brier,
            e.confidence_factor.value
        );
    }
    s
}

fn csv_text(t: &str) -> String {
    if t.contains([',', '"', '\n']) {
        format!("\"{}\"", t.replace('"', "\"\""))
    } else {
        t.to_string()
    }
}

fn file_stem(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// `report.json`, `summary.csv` and reliability files for each entry.
pub fn emit_report(report: &Report, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = write_all(
        out_dir,
        &[
            ("report.json".to_string(), report.to_json()?),
            ("summary.csv".to_string(), summary_csv(report)),
        ],
    )?;
    for e in &report.entries {
        let stem = format!("{:03}_{}_{}", e.index, file_stem(&e.model_name), file_stem(&e.dataset_name));
        written.extend(emit_reliability(&e.reliability, out_dir, &stem)?);
    }
    Ok(written)
}

fn write_all(out_dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .map(|(name, body)| {
            let path = out_dir.join(name);
            write_atomic(&path, body.as_bytes())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::BinningSpec;
    use crate::decision::{cost_plane, linear_grid};
    use crate::metrics::reliability_from_view;
    use crate::predictions::TopLabelView;

    fn view() -> TopLabelView {
        TopLabelView::new(vec![0.9, 0.8, 0.6, 0.5, 0.7, 0.95], vec![true, true, false, false, true, true]).unwrap()
    }

    #[test]
    fn reliability_files() {
        let data = reliability_from_view(&view(), BinningSpec::equal_width(15).unwrap(), 10).unwrap();
        let csv = reliability_csv(&data);
        assert_eq!(csv.lines().count(), 16);
        assert_eq!(histogram_csv(&data).lines().count(), 11);
        roxmltree::Document::parse(&reliability_svg(&data, "a & <b>")).unwrap();
    }

    #[test]
    fn cost_plane_table_shape() {
        let v = view();
        let plane = cost_plane(&v, &v, &linear_grid(0.0, 1.0, 10), &linear_grid(0.0, 1.0, 10)).unwrap();
        let csv = cost_plane_csv(&plane);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert!(lines.iter().all(|l| l.split(',').count() == 11));
        roxmltree::Document::parse(&cost_plane_svg(&plane, "plane")).unwrap();
    }

    #[test]
    fn colours_are_hex() {
        for v in [0.0, 0.25, 1.0, 4.0, f64::INFINITY] {
            let c = ratio_colour(v);
            assert_eq!(c.len(), 7);
        }
    }
}
