//! CSV, JSON and SVG output of a [`RunReport`].

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::reject::{CurveRow, CurveTable};

use super::{svg, Aggregate, RunReport};

pub const CURVE_HEADER: [&str; 9] = [
    "epsilon",
    "frac_empty",
    "frac_single",
    "frac_double",
    "sigma_hat_raw",
    "sigma_hat_clamped",
    "singleton_error_empirical",
    "reject_rate",
    "accept_count",
];

/// 17 significant digits, enough to round-trip any `f64`.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn row_fields(r: &CurveRow<f64>) -> [String; 9] {
    [
        num(r.epsilon),
        num(r.frac_empty),
        num(r.frac_single),
        num(r.frac_double),
        opt(r.sigma_hat_raw),
        opt(r.sigma_hat_clamped),
        opt(r.singleton_error_empirical),
        num(r.reject_rate),
        num(r.accept_count),
    ]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn close<W: Write>(w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

/// Writes `table` with the fixed curve header; `first_column` renames the
/// leading column (the probability baseline uses `threshold`).
pub fn write_curves(path: &Path, table: &CurveTable<f64>, first_column: &str) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = CURVE_HEADER;
    header[0] = first_column;
    w.write_record(header)?;
    for r in &table.rows {
        w.write_record(row_fields(r))?;
    }
    close(w, path)
}

fn parse_cell(field: &str, column: &str, row: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| Error::NonNumericFeature {
        column: column.to_string(),
        row,
        value: field.to_string(),
    })
}

/// Reads a curve file written by [`write_curves`].
pub fn read_curves(path: &Path) -> Result<CurveTable<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_curves_from(file)
}

pub(crate) fn read_curves_from<R: Read>(reader: R) -> Result<CurveTable<f64>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != CURVE_HEADER.len() || header.iter().skip(1).ne(CURVE_HEADER.iter().skip(1).copied()) {
        return Err(Error::InvalidArgument(format!("unexpected curve header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut v = [None; 9];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = parse_cell(rec.get(c).unwrap_or(""), CURVE_HEADER[c], i + 1)?;
        }
        let req = |c: usize| v[c].ok_or_else(|| Error::MissingColumn(CURVE_HEADER[c].to_string()));
        rows.push(CurveRow {
            epsilon: req(0)?,
            frac_empty: req(1)?,
            frac_single: req(2)?,
            frac_double: req(3)?,
            sigma_hat_raw: v[4],
            sigma_hat_clamped: v[5],
            singleton_error_empirical: v[6],
            reject_rate: req(7)?,
            accept_count: req(8)?,
        });
    }
    Ok(CurveTable { rows })
}

fn write_bands(path: &Path, agg: &Aggregate) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["epsilon".to_string()];
    for name in &CURVE_HEADER[1..] {
        header.push(format!("{name}_q05"));
        header.push(format!("{name}_q95"));
    }
    w.write_record(&header)?;
    for (lo, hi) in agg.lower.rows.iter().zip(&agg.upper.rows) {
        let (lo, hi) = (row_fields(lo), row_fields(hi));
        let mut rec = vec![lo[0].clone()];
        for c in 1..CURVE_HEADER.len() {
            rec.push(lo[c].clone());
            rec.push(hi[c].clone());
        }
        w.write_record(&rec)?;
    }
    close(w, path)
}

fn write_runs(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(std::iter::once("run").chain(CURVE_HEADER))?;
    for (i, run) in report.runs.iter().enumerate() {
        for r in &run.curve.rows {
            w.write_record(std::iter::once(i.to_string()).chain(row_fields(r)))?;
        }
    }
    close(w, path)
}

fn write_sigma_tilde(path: &Path, report: &RunReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "batch",
        "epsilon",
        "epsilon_tilde",
        "usable",
        "ln_inv_delta",
        "sigma_tilde",
        "defined_runs",
    ])?;
    for r in &report.sigma_tilde {
        w.write_record([
            r.batch.to_string(),
            num(r.epsilon),
            num(r.epsilon_tilde),
            r.usable.to_string(),
            num(r.ln_inv_delta),
            opt(r.sigma_tilde),
            r.defined_runs.to_string(),
        ])?;
    }
    close(w, path)
}

/// Writes `curves.csv` (mean curve), `bands.csv`, `runs.csv`, `meta.json`,
/// for the inductive regimes `chow.csv` and `sigma_tilde.csv`, and
/// `curves.svg` when `svg` is set. Returns the paths written.
pub fn emit_reports(report: &RunReport, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_curves(&out("curves.csv"), &report.aggregate.mean, "epsilon")?;
    write_bands(&out("bands.csv"), &report.aggregate)?;
    write_runs(&out("runs.csv"), report)?;
    if let Some(chow) = &report.chow {
        write_curves(&out("chow.csv"), &chow.mean, "threshold")?;
    }
    if !report.sigma_tilde.is_empty() {
        write_sigma_tilde(&out("sigma_tilde.csv"), report)?;
    }
    let meta = out("meta.json");
    let text = serde_json::to_string_pretty(&report.metadata)?;
    fs::write(&meta, text + "\n").map_err(|e| Error::io(&meta, e))?;
    if svg {
        let p = out("curves.svg");
        fs::write(&p, svg::render(&report.aggregate.mean)).map_err(|e| Error::io(&p, e))?;
    }
    Ok(written)
}
