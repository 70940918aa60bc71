//! Plain-text serialization with bit-stable output. Floats are written in
//! Rust's shortest round-trip decimal form, so `read(write(x)) == x` exactly
//! and identical inputs produce byte-identical files. Intentionally
//! hand-rolled: the formats are four fixed headers and one flat JSON object,
//! and exact float round-tripping plus row-addressed errors are the whole
//! point.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::grid::{CoefficientVector, Field, ObservedTrace};
use crate::transforms::MediumProfile;

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::File {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    }
}

fn guard_finite(context: &str, row: usize, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "refusing to write non-finite value at {context} row {row}: {v}"
        )))
    }
}

/// One parsed CSV body: header checked, cells split, every line numbered
/// (1-based, counting the header) for error reporting.
fn parse_rows<'a>(
    path: &Path,
    text: &'a str,
    header: &str,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let ncols = header.split(',').count();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == header => {}
        Some((_, first)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header `{header}`, found `{first}`"),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != ncols {
            return Err(parse_err(
                path,
                idx + 1,
                format!("expected {ncols} columns, found {}", cells.len()),
            ));
        }
        rows.push((idx + 1, cells));
    }
    Ok(rows)
}

fn parse_index(path: &Path, line: usize, name: &str, cell: &str, expect: usize) -> Result<usize> {
    let got: usize = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{name} index `{cell}` is not an integer")))?;
    if got != expect {
        return Err(parse_err(
            path,
            line,
            format!("{name} index out of order: expected {expect}, found {got}"),
        ));
    }
    Ok(got)
}

fn parse_value(path: &Path, line: usize, name: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{name} `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("{name} is not finite: `{cell}`"),
        ));
    }
    Ok(v)
}

/// Header `j,t,value`, one row per time layer.
pub fn write_trace_csv(path: &Path, trace: &ObservedTrace) -> Result<()> {
    let mut out = String::from("j,t,value\n");
    for (j, v) in trace.values.iter().enumerate() {
        guard_finite("trace", j, *v)?;
        writeln!(out, "{},{},{}", j, trace.grid.time(j), v).expect("string write");
    }
    fs::write(path, out).map_err(file_err(path))
}

/// Columns of a trace file; the grid is not stored, so the caller checks the
/// row count (and, if it cares, the time spacing) against its own grid.
#[derive(Debug)]
pub struct TraceCsv {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn read_trace_csv(path: &Path) -> Result<TraceCsv> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let rows = parse_rows(path, &text, "j,t,value")?;
    let mut t = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (k, (line, cells)) in rows.iter().enumerate() {
        parse_index(path, *line, "layer", cells[0], k)?;
        t.push(parse_value(path, *line, "t", cells[1])?);
        values.push(parse_value(path, *line, "value", cells[2])?);
    }
    Ok(TraceCsv { t, values })
}

/// Header `i,x,value`, one row per spatial node.
pub fn write_coeff_csv(path: &Path, v: &CoefficientVector) -> Result<()> {
    let mut out = String::from("i,x,value\n");
    for (i, val) in v.values.iter().enumerate() {
        guard_finite("coefficient", i, *val)?;
        writeln!(out, "{},{},{}", i, v.grid.x(i), val).expect("string write");
    }
    fs::write(path, out).map_err(file_err(path))
}

#[derive(Debug)]
pub struct CoeffCsv {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

pub fn read_coeff_csv(path: &Path) -> Result<CoeffCsv> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let rows = parse_rows(path, &text, "i,x,value")?;
    let mut x = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (k, (line, cells)) in rows.iter().enumerate() {
        parse_index(path, *line, "node", cells[0], k)?;
        x.push(parse_value(path, *line, "x", cells[1])?);
        values.push(parse_value(path, *line, "value", cells[2])?);
    }
    Ok(CoeffCsv { x, values })
}

/// Long form `i,j,x,t,value`: node-outer, layer-inner.
pub fn write_field_csv(path: &Path, y: &Field) -> Result<()> {
    let g = y.grid;
    let mut out = String::from("i,j,x,t,value\n");
    for i in 0..=g.n {
        for j in 0..=g.m {
            let v = y.at(i, j);
            guard_finite("field", i * (g.m + 1) + j, v)?;
            writeln!(out, "{},{},{},{},{}", i, j, g.x(i), g.time(j), v).expect("string write");
        }
    }
    fs::write(path, out).map_err(file_err(path))
}

/// Header `k,z,c,rho`, one row per depth sample.
pub fn write_medium_csv(path: &Path, m: &MediumProfile) -> Result<()> {
    let mut out = String::from("k,z,c,rho\n");
    for k in 0..m.z.len() {
        guard_finite("medium z", k, m.z[k])?;
        guard_finite("medium c", k, m.c[k])?;
        guard_finite("medium rho", k, m.rho[k])?;
        writeln!(out, "{},{},{},{}", k, m.z[k], m.c[k], m.rho[k]).expect("string write");
    }
    fs::write(path, out).map_err(file_err(path))
}

pub fn read_medium_csv(path: &Path) -> Result<MediumProfile> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    let rows = parse_rows(path, &text, "k,z,c,rho")?;
    let mut z = Vec::with_capacity(rows.len());
    let mut c = Vec::with_capacity(rows.len());
    let mut rho = Vec::with_capacity(rows.len());
    for (k, (line, cells)) in rows.iter().enumerate() {
        parse_index(path, *line, "sample", cells[0], k)?;
        z.push(parse_value(path, *line, "z", cells[1])?);
        c.push(parse_value(path, *line, "c", cells[2])?);
        rho.push(parse_value(path, *line, "rho", cells[3])?);
    }
    MediumProfile::new(z.into(), c.into(), rho.into())
}

/// Deterministic JSON: BTreeMap key order plus serde_json's shortest
/// round-trip float text, so equal reports render to equal bytes.
pub fn render_report_json(report: &ExperimentReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report_json(path: &Path, report: &ExperimentReport) -> Result<()> {
    for (k, v) in &report.params {
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("param {k} is not finite")));
        }
    }
    for (k, v) in &report.metrics {
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("metric {k} is not finite")));
        }
    }
    for (k, series) in &report.series {
        if let Some(bad) = series.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "series {k} has a non-finite entry at index {bad}"
            )));
        }
    }
    fs::write(path, render_report_json(report)).map_err(file_err(path))
}

pub fn read_report_json(path: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

/// Flat `key = value` text; `#` lines and blank lines ignored; duplicate
/// keys rejected. Which keys are meaningful is the caller's business (the
/// CLI rejects unknown ones).
pub fn parse_config_str(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "config line {}: expected key=value, found `{line}`",
                idx + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "config line {}: empty key",
                idx + 1
            )));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::InvalidConfig(format!(
                "config line {}: duplicate key `{key}`",
                idx + 1
            )));
        }
    }
    Ok(map)
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    parse_config_str(&text)
}
