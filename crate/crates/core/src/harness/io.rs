//! CSV prediction files, id lists and point files.
//!
//! Prediction files have the header `[id,]label,s_0,...,s_{k-1}`. Scores are
//! written with 17 significant digits so a write/load cycle is lossless.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictions::{PredictionSet, ScoreKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionFormat {
    CsvLogits,
    CsvProbs,
}

impl PredictionFormat {
    pub fn kind(self) -> ScoreKind {
        match self {
            PredictionFormat::CsvLogits => ScoreKind::Logits,
            PredictionFormat::CsvProbs => ScoreKind::Probabilities,
        }
    }

    pub fn of(kind: ScoreKind) -> Self {
        match kind {
            ScoreKind::Logits => PredictionFormat::CsvLogits,
            ScoreKind::Probabilities => PredictionFormat::CsvProbs,
        }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => parse_error(path, line, format!("{other:?}")),
    }
}

/// Checks `[id,]label,s_0..s_{k-1}`; returns whether an id column is present and `k`.
fn parse_header(path: &Path, header: &csv::StringRecord) -> Result<(bool, usize)> {
    let fields: Vec<&str> = header.iter().collect();
    let has_id = fields.first() == Some(&"id");
    let rest = if has_id { &fields[1..] } else { &fields[..] };
    if rest.first() != Some(&"label") {
        return Err(Error::HeaderMismatch {
            path: path.to_path_buf(),
            message: format!("expected `[id,]label,s_0,...`, found `{}`", fields.join(",")),
        });
    }
    let scores = &rest[1..];
    for (c, name) in scores.iter().enumerate() {
        if *name != format!("s_{c}") {
            return Err(Error::HeaderMismatch {
                path: path.to_path_buf(),
                message: format!("column {} should be `s_{c}`, found `{name}`", c + 1 + usize::from(has_id) ),
            });
        }
    }
    Ok((has_id, scores.len()))
}

pub fn load_predictions(path: &Path, format: PredictionFormat) -> Result<PredictionSet> {
    let mut rdr = reader(path)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(parse_error(path, 1, "file is empty")),
    };
    let (has_id, k) = parse_header(path, &header)?;
    let width = k + 1 + usize::from(has_id);
    let (mut ids, mut labels, mut scores) = (Vec::new(), Vec::new(), Vec::new());
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_error(path, line, format!("expected {width} fields, found {}", record.len())));
        }
        let mut fields = record.iter();
        if has_id {
            ids.push(fields.next().unwrap_or_default().to_string());
        }
        let label = fields.next().unwrap_or_default();
        labels.push(
            label
                .parse::<usize>()
                .map_err(|_| parse_error(path, line, format!("label `{label}` is not a non-negative integer")))?,
        );
        for field in fields {
            scores.push(
                field
                    .parse::<f64>()
                    .map_err(|_| parse_error(path, line, format!("score `{field}` is not a number")))?,
            );
        }
    }
    let preds = PredictionSet::new(scores, k, format.kind(), labels)?;
    if has_id {
        preds.with_example_ids(ids)
    } else {
        Ok(preds)
    }
}

pub fn format_score(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn predictions_to_csv(preds: &PredictionSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ids = preds.example_ids();
    let mut header: Vec<String> = Vec::new();
    if ids.is_some() {
        header.push("id".into());
    }
    header.push("label".into());
    header.extend((0..preds.num_classes()).map(|c| format!("s_{c}")));
    w.write_record(&header).map_err(|e| csv_error(Path::new("<memory>"), e))?;
    for (j, row) in preds.rows().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(row.len() + 2);
        if let Some(ids) = ids {
            record.push(ids[j].clone());
        }
        record.push(preds.labels()[j].to_string());
        record.extend(row.iter().map(|&s| format_score(s)));
        w.write_record(&record).map_err(|e| csv_error(Path::new("<memory>"), e))?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))
}

pub fn write_predictions(preds: &PredictionSet, path: &Path) -> Result<()> {
    write_atomic(path, &predictions_to_csv(preds)?)
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// One example id per line; blank lines are ignored.
pub fn load_id_list(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// `x,y` pairs with a header row.
pub fn load_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = reader(path)?;
    let mut points = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if i == 0 {
            let fields: Vec<&str> = record.iter().collect();
            if fields != ["x", "y"] {
                return Err(Error::HeaderMismatch {
                    path: path.to_path_buf(),
                    message: format!("expected `x,y`, found `{}`", fields.join(",")),
                });
            }
            continue;
        }
        if record.len() != 2 {
            return Err(parse_error(path, line, format!("expected 2 fields, found {}", record.len())));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_error(path, line, format!("`{s}` is not a number")))
        };
        points.push((parse(&record[0])?, parse(&record[1])?));
    }
    Ok(points)
}

pub(crate) fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
