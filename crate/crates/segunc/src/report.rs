//! CSV and JSON Lines files exchanged between `analyze`, `correlate` and `flag`.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields the exact values that were written. An empty cell means the
//! value is undefined.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use segunc_core::{CaseReport, CorrelationResult};

use crate::{Error, Result};

/// Columns of the per-case report, in file order.
pub const REPORT_COLUMNS: [&str; 7] = [
    "case_id",
    "n_samples",
    "cv",
    "d_pw",
    "u_labelled",
    "consensus_voxels",
    "dice",
];

/// Columns of the correlation table.
pub const CORRELATION_COLUMNS: [&str; 5] = ["measure", "rho", "p_value", "n", "dropped"];

/// Reports read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    /// Rows in file order. The threshold is not stored in CSV and reads as NaN.
    pub reports: Vec<CaseReport>,
    /// Whether the file has a `dice` column at all.
    pub has_dice: bool,
}

/// Shortest round-trip text; scientific notation outside `[1e-5, 1e16)`.
pub fn fmt_float(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file)))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Report {
            path: path.into(),
            reason: format!("{other:?}"),
        },
    }
}

fn write_rows<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the per-case report table.
pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[CaseReport]) -> Result<()> {
    write_rows(
        path.as_ref(),
        REPORT_COLUMNS,
        reports.iter().map(|r| {
            [
                r.case_id.clone(),
                r.n_samples.to_string(),
                fmt_float(r.cv),
                fmt_float(r.d_pw),
                opt(r.u_labelled),
                r.consensus_voxels.to_string(),
                opt(r.dice),
            ]
        }),
    )
}

/// Writes one JSON object per case; undefined values are `null`.
pub fn write_reports_jsonl(path: impl AsRef<Path>, reports: &[CaseReport]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in reports {
        let record = serde_json::json!({
            "case_id": r.case_id,
            "n_samples": r.n_samples,
            "threshold": r.threshold,
            "cv": r.cv,
            "d_pw": r.d_pw,
            "u_labelled": r.u_labelled,
            "consensus_voxels": r.consensus_voxels,
            "dice": r.dice,
        });
        writeln!(w, "{record}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a report table. Columns are matched by name; `dice` may be absent.
pub fn read_reports_csv(path: impl AsRef<Path>) -> Result<ReportTable> {
    let path = path.as_ref();
    let bad = |reason: String| Error::Report {
        path: path.into(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let required = |name: &str| column(name).ok_or_else(|| bad(format!("missing `{name}` column")));
    let id_col = required("case_id")?;
    let n_col = required("n_samples")?;
    let cv_col = required("cv")?;
    let dpw_col = required("d_pw")?;
    let u_col = required("u_labelled")?;
    let vox_col = required("consensus_voxels")?;
    let dice_col = column("dice");

    let mut reports = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let cell = |col: usize| record.get(col).unwrap_or("");
        let float = |col: usize| -> Result<Option<f64>> {
            let text = cell(col);
            if text.is_empty() {
                return Ok(None);
            }
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(bad(format!(
                    "line {line}: `{}` is not a finite number: `{text}`",
                    headers[col].to_owned()
                ))),
            }
        };
        let required_float = |col: usize| -> Result<f64> {
            float(col)?.ok_or_else(|| bad(format!("line {line}: `{}` is empty", &headers[col])))
        };
        let count = |col: usize| -> Result<usize> {
            cell(col).parse().map_err(|_| {
                bad(format!(
                    "line {line}: `{}` is not a count: `{}`",
                    &headers[col],
                    cell(col)
                ))
            })
        };
        reports.push(CaseReport {
            case_id: cell(id_col).to_owned(),
            n_samples: count(n_col)?,
            cv: required_float(cv_col)?,
            d_pw: required_float(dpw_col)?,
            u_labelled: float(u_col)?,
            consensus_voxels: count(vox_col)?,
            dice: dice_col.map(float).transpose()?.flatten(),
            threshold: f64::NAN,
        });
    }
    Ok(ReportTable {
        reports,
        has_dice: dice_col.is_some(),
    })
}

/// Writes the correlation table.
pub fn write_correlation_csv(path: impl AsRef<Path>, rows: &[CorrelationResult]) -> Result<()> {
    write_rows(
        path.as_ref(),
        CORRELATION_COLUMNS,
        rows.iter().map(|r| {
            [
                r.measure.name().to_owned(),
                fmt_float(r.rho),
                fmt_float(r.p_value),
                r.n.to_string(),
                r.dropped.to_string(),
            ]
        }),
    )
}

/// Writes `case_id,error` rows for cases that could not be analyzed.
pub fn write_failures_csv(path: impl AsRef<Path>, failures: &[(String, String)]) -> Result<()> {
    write_rows(
        path.as_ref(),
        ["case_id", "error"],
        failures.iter().map(|(id, e)| [id.clone(), e.clone()]),
    )
}

/// Writes `case_id,reasons` rows; reasons are joined with `;`.
pub fn write_flags_csv(path: impl AsRef<Path>, flagged: &[(String, Vec<String>)]) -> Result<()> {
    write_rows(
        path.as_ref(),
        ["case_id", "reasons"],
        flagged.iter().map(|(id, reasons)| [id.clone(), reasons.join(";")]),
    )
}
