//! CSV ingestion and the on-disk artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use intervalad::model::{validate_sample, ConvexSetRepr, IntervalSample, RawRow, SupportFunctionValues};
use intervalad::Error as CoreError;

use crate::error::{CliError, CliResult};

/// Line number (1-based, header is line 1) of data row `i`.
fn data_line(i: usize) -> usize {
    i + 2
}

fn parse_err(line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        line,
        message: message.into(),
    }
}

/// Reads `y_lower,y_upper,z1,...,zL` and validates the rows.
pub fn ingest_csv(path: &Path) -> CliResult<IntervalSample> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file)
}

pub fn ingest_reader<R: std::io::Read>(reader: R) -> CliResult<IntervalSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(parse_err(1, "empty file: header `y_lower,y_upper,z1,...` expected")),
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
    };
    let fields: Vec<&str> = header.iter().collect();
    let ell = fields.len().saturating_sub(2);
    let expected: Vec<String> = ["y_lower".to_string(), "y_upper".to_string()]
        .into_iter()
        .chain((1..=ell).map(|j| format!("z{j}")))
        .collect();
    if ell == 0 || fields != expected {
        return Err(parse_err(1, "header must be `y_lower,y_upper,z1,...,zL`"));
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != ell + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", ell + 2, rec.len())));
        }
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(line, format!("`{s}` is not a number"))))
            .collect::<CliResult<_>>()?;
        rows.push((line, RawRow::new(vals[0], vals[1], vals[2..].to_vec())));
    }
    let raw: Vec<RawRow> = rows.iter().map(|(_, r)| r.clone()).collect();
    validate_sample(&raw).map_err(|e| {
        let line_of = |i: usize| rows.get(i).map(|r| r.0 as usize).unwrap_or(data_line(i));
        match e {
            CoreError::RowIntervalViolation(i) => CliError::Data(format!("line {}: y_lower exceeds y_upper", line_of(i))),
            CoreError::NonFinite(i) => CliError::Data(format!("line {}: non-finite value", line_of(i))),
            CoreError::DimensionMismatch(i) => CliError::Data(format!("line {}: wrong covariate count", line_of(i))),
            CoreError::TooFewRows => CliError::Data("at least two data rows are required".into()),
            other => other.into(),
        }
    })
}

pub fn fmt(v: f64) -> String {
    format!("{v}")
}

fn writer(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn direction_prefix_header(ell: usize) -> Vec<String> {
    let mut h = vec!["direction".to_string()];
    if ell == 2 {
        h.push("angle".into());
    }
    h.extend((1..=ell).map(|j| format!("p{j}")));
    h
}

fn direction_prefix(grid: &intervalad::DirectionGrid, k: usize) -> Vec<String> {
    let mut row = vec![k.to_string()];
    if let Some(a) = grid.angle(k) {
        row.push(fmt(a));
    }
    row.extend(grid.direction(k).iter().map(|v| fmt(*v)));
    row
}

/// `support.csv`: grid directions with raw and hull-repaired support values.
pub fn write_support(dir: &Path, name: &str, raw: &SupportFunctionValues, hull: &ConvexSetRepr) -> CliResult<()> {
    let grid = &raw.grid;
    let mut w = csv::Writer::from_writer(writer(dir, name)?);
    let mut header = direction_prefix_header(grid.ell());
    header.extend(["raw".to_string(), "hull".to_string()]);
    w.write_record(&header)?;
    for k in 0..grid.len() {
        let mut row = direction_prefix(grid, k);
        row.push(fmt(raw.values[k]));
        row.push(fmt(hull.support.values[k]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `hull.csv`: the touching point of the hull for every grid direction, in
/// grid (angle) order.
pub fn write_hull(dir: &Path, name: &str, hull: &ConvexSetRepr) -> CliResult<()> {
    let grid = &hull.support.grid;
    let ell = grid.ell();
    let mut w = csv::Writer::from_writer(writer(dir, name)?);
    let mut header = vec!["direction".to_string()];
    if ell == 2 {
        header.push("angle".into());
    }
    header.extend((1..=ell).map(|j| format!("theta{j}")));
    w.write_record(&header)?;
    for (k, x) in hull.extreme_points.iter().enumerate() {
        let mut row = vec![k.to_string()];
        if let Some(a) = grid.angle(k) {
            row.push(fmt(a));
        }
        row.extend(x.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bounds(dir: &Path, bounds: &[(f64, f64)]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer(dir, "bounds.csv")?);
    w.write_record(["coordinate", "lower", "upper"])?;
    for (j, (lo, hi)) in bounds.iter().enumerate() {
        w.write_record([(j + 1).to_string(), fmt(*lo), fmt(*hi)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut w = writer(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_rows(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(writer(dir, name)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}
