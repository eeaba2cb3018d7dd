//! Selective prediction: abstain on the least confident fraction `r` of
//! examples and pay `rho` per abstention, 1 per retained mistake.
//!
//! `cost(r, rho) = rho * r + (1 - r) * risk(r)`, where `risk(r)` is the error
//! rate among the `ceil((1 - r) n)` most confident examples. A cost plane is
//! the cellwise ratio `cost_A / cost_B` over a grid of `(r, rho)`.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::predictions::TopLabelView;

/// Slack for `(1 - r) n` landing a few ulps above an integer.
const RETAIN_SLACK: f64 = 1e-9;

/// Cumulative mistakes along the confidence ranking.
#[derive(Debug, Clone)]
pub struct RiskCurve {
    /// `mistakes[i]` = errors among the `i` most confident examples.
    mistakes: Vec<usize>,
}

impl RiskCurve {
    /// Ranks by confidence, highest first; ties keep lower indices first.
    pub fn new(view: &TopLabelView) -> Self {
        let mut order: Vec<usize> = (0..view.len()).collect();
        order.sort_by(|&a, &b| view.confidence[b].total_cmp(&view.confidence[a]));
        let mut mistakes = Vec::with_capacity(order.len() + 1);
        mistakes.push(0);
        let mut running = 0;
        for j in order {
            running += usize::from(!view.correct[j]);
            mistakes.push(running);
        }
        Self { mistakes }
    }

    pub fn len(&self) -> usize {
        self.mistakes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn retained(&self, r: f64) -> usize {
        let n = self.len();
        let raw = ((1.0 - r) * n as f64 - RETAIN_SLACK).ceil();
        (raw.max(0.0) as usize).min(n)
    }

    /// Error rate among retained predictions; 0 when nothing is retained.
    pub fn risk(&self, r: f64) -> f64 {
        let kept = self.retained(r);
        if kept == 0 {
            0.0
        } else {
            self.mistakes[kept] as f64 / kept as f64
        }
    }

    pub fn cost(&self, r: f64, rho: f64) -> f64 {
        rho * r + (1.0 - r) * self.risk(r)
    }
}

pub fn risk_at_coverage(view: &TopLabelView, r: f64) -> f64 {
    RiskCurve::new(view).risk(r)
}

pub fn selective_cost(view: &TopLabelView, r: f64, rho: f64) -> f64 {
    RiskCurve::new(view).cost(r, rho)
}

/// Relative selective-prediction cost of model A over model B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPlane {
    pub model_a: String,
    pub model_b: String,
    /// Abstention cost over misclassification cost (columns).
    pub cost_ratios: Vec<f64>,
    /// Abstention rates (rows).
    pub abstention_rates: Vec<f64>,
    /// `relative[row][col] = cost_A / cost_B`; `+inf` when only B is free.
    #[serde(serialize_with = "serialize_matrix", deserialize_with = "deserialize_matrix")]
    pub relative: Vec<Vec<f64>>,
    pub orientation: String,
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid(format!("{name} grid is empty")));
    }
    if grid.iter().any(|&x| !(x >= lo && x <= hi)) {
        return Err(Error::InvalidGrid(format!("{name} grid values must lie in [{lo}, {hi}]")));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidGrid(format!("{name} grid must be sorted ascending")));
    }
    Ok(())
}

pub fn cost_plane(
    view_a: &TopLabelView,
    view_b: &TopLabelView,
    cost_ratios: &[f64],
    abstention_rates: &[f64],
) -> Result<CostPlane> {
    check_grid("cost ratio", cost_ratios, 0.0, f64::MAX)?;
    check_grid("abstention rate", abstention_rates, 0.0, 1.0)?;
    let (curve_a, curve_b) = (RiskCurve::new(view_a), RiskCurve::new(view_b));
    let relative = abstention_rates
        .iter()
        .map(|&r| {
            cost_ratios
                .iter()
                .map(|&rho| {
                    let (a, b) = (curve_a.cost(r, rho), curve_b.cost(r, rho));
                    match (a == 0.0, b == 0.0) {
                        (true, true) => 1.0,
                        (false, true) => f64::INFINITY,
                        _ => a / b,
                    }
                })
                .collect()
        })
        .collect();
    Ok(CostPlane {
        model_a: "A".into(),
        model_b: "B".into(),
        cost_ratios: cost_ratios.to_vec(),
        abstention_rates: abstention_rates.to_vec(),
        relative,
        orientation: "cost_A / cost_B; values below 1 favour model A".into(),
    })
}

impl CostPlane {
    pub fn with_names(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.model_a = a.into();
        self.model_b = b.into();
        self
    }
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn format_cell(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Cell {
    Value(f64),
    Text(String),
}

fn serialize_matrix<S: Serializer>(m: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for row in m {
        let cells: Vec<Cell> = row
            .iter()
            .map(|&v| if v.is_finite() { Cell::Value(v) } else { Cell::Text(format_cell(v)) })
            .collect();
        seq.serialize_element(&cells)?;
    }
    seq.end()
}

fn deserialize_matrix<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
    let rows: Vec<Vec<Cell>> = Vec::deserialize(d)?;
    rows.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|c| match c {
                    Cell::Value(v) => Ok(v),
                    Cell::Text(t) if t == "inf" => Ok(f64::INFINITY),
                    Cell::Text(t) => Err(serde::de::Error::custom(format!("bad cell {t}"))),
                })
                .collect()
        })
        .collect()
}
