//! Positioning error statistics and comparison reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Position;

pub const REPORT_FILE: &str = "report.md";
pub const CDF_FILE: &str = "cdf.csv";

/// Squared planar error in m².
pub fn squared_error(pred: Position, truth: Position) -> f64 {
    let dx = truth.x - pred.x;
    let dy = truth.y - pred.y;
    dx * dx + dy * dy
}

/// Error statistics of one algorithm on one test set, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub algorithm: String,
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub cdf68: f64,
    pub cdf95: f64,
    /// Per-sample squared errors (m²), in input order.
    pub squared_errors: Vec<f64>,
}

/// Nearest-rank percentile of an ascending slice: element
/// `ceil(percent * n / 100) - 1`, computed in integers.
pub fn nearest_rank(sorted: &[f64], percent: u32) -> f64 {
    let n = sorted.len();
    let rank = (percent as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

pub fn compute_report(
    preds: &[Position],
    truths: &[Position],
    name: impl Into<String>,
) -> Result<ErrorReport> {
    if preds.len() != truths.len() {
        return Err(Error::contract(format!(
            "compute_report: {} predictions vs {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::contract("compute_report needs at least one sample"));
    }
    let e: Vec<f64> = preds
        .iter()
        .zip(truths)
        .map(|(&p, &t)| squared_error(p, t))
        .collect();
    let n = e.len() as f64;
    let mae = e.iter().map(|v| v.sqrt()).sum::<f64>() / n;
    let rmse = (e.iter().sum::<f64>() / n).sqrt();
    let mut sorted = e.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorReport {
        algorithm: name.into(),
        n: e.len(),
        mae,
        rmse,
        cdf68: nearest_rank(&sorted, 68).sqrt(),
        cdf95: nearest_rank(&sorted, 95).sqrt(),
        squared_errors: e,
    })
}

/// Markdown comparison table, rows in input order, followed by `notes`.
pub fn render_markdown(reports: &[ErrorReport], notes: &[String]) -> String {
    let mut s = String::new();
    s.push_str("| Algorithm | MAE | RMSE | 68%CDF | 95%CDF |\n");
    s.push_str("|---|---|---|---|---|\n");
    for r in reports {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.2} | {:.2} | {:.2} |",
            r.algorithm, r.mae, r.rmse, r.cdf68, r.cdf95
        );
    }
    s.push('\n');
    if let Some(n) = reports.first().map(|r| r.n) {
        let _ = writeln!(s, "Errors in meters over {n} test fingerprints.");
    }
    s.push_str(
        "CDF columns are the square root of the nearest-rank percentile of the sorted squared errors (no interpolation).\n",
    );
    for note in notes {
        let _ = writeln!(s, "\n{note}");
    }
    s
}

/// `algorithm,error_m,cum_fraction` rows, errors ascending per algorithm.
pub fn render_cdf_csv(reports: &[ErrorReport]) -> String {
    let mut s = String::from("algorithm,error_m,cum_fraction\n");
    for r in reports {
        let mut errs: Vec<f64> = r.squared_errors.iter().map(|e| e.sqrt()).collect();
        errs.sort_by(f64::total_cmp);
        let n = errs.len() as f64;
        for (i, e) in errs.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", r.algorithm, e, (i + 1) as f64 / n);
        }
    }
    s
}

/// Writes `report.md` and `cdf.csv` into `dir`.
pub fn emit_comparison(
    reports: &[ErrorReport],
    dir: impl AsRef<Path>,
    notes: &[String],
) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::contract("emit_comparison needs at least one report"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let md = dir.join(REPORT_FILE);
    let csv = dir.join(CDF_FILE);
    std::fs::write(&md, render_markdown(reports, notes)).map_err(|e| Error::io(&md, e))?;
    std::fs::write(&csv, render_cdf_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    Ok((md, csv))
}
