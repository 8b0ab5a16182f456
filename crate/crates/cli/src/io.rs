//! CSV reading and writing.
//!
//! Format: comma-separated, header row required, decimal point `.`, no
//! locale handling. Floats are written with 17 significant digits so the
//! files round-trip bit-exactly; undefined metrics are written as NaN.

use ndarray::{Array1, Array2};
use std::path::Path;

use bsps::simulation::StudyRow;
use bsps::tuning::CvReport;

use crate::CliError;

/// 17 significant digits: enough for any finite f64 to parse back to the
/// same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn parse_cell(raw: &str, path: &Path, row: usize, col: usize) -> Result<f64, CliError> {
    raw.parse::<f64>().map_err(|_| {
        CliError::Data(format!(
            "{}: row {}, column {}: cannot parse {raw:?} as a number",
            path.display(),
            row + 2, // 1-based, counting the header line
            col + 1
        ))
    })
}

/// Reads a modeling dataset: first column is the response, the remaining
/// columns are predictors.
pub fn read_xy_csv(path: &Path) -> Result<(Array2<f64>, Array1<f64>), CliError> {
    let mut reader = open_reader(path)?;
    let width = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .len();
    if width < 2 {
        return Err(CliError::Data(format!(
            "{}: need a response column plus at least one predictor",
            path.display()
        )));
    }
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() != width {
            return Err(CliError::Data(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                i + 2,
                record.len()
            )));
        }
        y.push(parse_cell(&record[0], path, i, 0)?);
        let mut row = Vec::with_capacity(width - 1);
        for c in 1..width {
            row.push(parse_cell(&record[c], path, i, c)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();
    let p = width - 1;
    let x = Array2::from_shape_fn((n, p), |(i, j)| rows[i][j]);
    Ok((x, Array1::from_vec(y)))
}

/// Reads a feature-only matrix (all columns are predictors).
pub fn read_features_csv(path: &Path) -> Result<Array2<f64>, CliError> {
    let mut reader = open_reader(path)?;
    let width = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .len();
    if width < 1 {
        return Err(CliError::Data(format!("{}: no columns", path.display())));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if record.len() != width {
            return Err(CliError::Data(format!(
                "{}: row {} has {} fields, expected {width}",
                path.display(),
                i + 2,
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(width);
        for c in 0..width {
            row.push(parse_cell(&record[c], path, i, c)?);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let n = rows.len();
    Ok(Array2::from_shape_fn((n, width), |(i, j)| rows[i][j]))
}

/// Ensemble predictions as a one-column CSV.
pub fn predictions_csv(pred: &Array1<f64>) -> String {
    let mut out = String::from("prediction\n");
    for &v in pred.iter() {
        out.push_str(&fmt_f64(v));
        out.push('\n');
    }
    out
}

/// Per-model predictions as an m x G CSV.
pub fn per_model_predictions_csv(pred: &Array2<f64>) -> String {
    let groups = pred.ncols();
    let header: Vec<String> = (1..=groups).map(|g| format!("model_{g}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..pred.nrows() {
        let row: Vec<String> = (0..groups).map(|g| fmt_f64(pred[[i, g]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// The cross-validation report as a wide CSV: one row per grid pair.
pub fn cv_report_csv(report: &CvReport) -> String {
    let mut header = String::from("t,u,mean_mspe");
    for fold in 1..=report.folds {
        header.push_str(&format!(",fold_{fold}"));
    }
    let mut out = header;
    out.push('\n');
    for (idx, &(t, u)) in report.grid.iter().enumerate() {
        let mut row = format!("{t},{u},{}", fmt_f64(report.mean_mspe[idx]));
        for &mspe in &report.fold_mspe[idx] {
            row.push(',');
            row.push_str(&fmt_f64(mspe));
        }
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub const STUDY_HEADER: &str =
    "rep,scenario,p,n,zeta,rho,snr,G,t,u,mspe_rel,recall,precision,mspe_bar,cor_bar,fit_seconds";

/// The simulation study table; undefined recall/precision serialize as NaN.
pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(STUDY_HEADER);
    out.push('\n');
    for r in rows {
        let recall = r.metrics.recall.unwrap_or(f64::NAN);
        let precision = r.metrics.precision.unwrap_or(f64::NAN);
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.rep,
            r.scenario,
            r.p,
            r.n,
            fmt_f64(r.zeta),
            fmt_f64(r.rho),
            fmt_f64(r.snr),
            r.groups,
            r.t,
            r.u,
            fmt_f64(r.metrics.mspe_rel),
            fmt_f64(recall),
            fmt_f64(precision),
            fmt_f64(r.metrics.mspe_bar),
            fmt_f64(r.metrics.cor_bar),
            fmt_f64(r.fit_seconds),
        ));
    }
    out
}
