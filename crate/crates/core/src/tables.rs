// SPDX-License-Identifier: MIT OR Apache-2.0

//! Columnar text helpers shared by every table artifact.
//!
//! Tables are comma-separated with a header row. Artifacts produced by a run
//! plan start with one `#` comment line carrying provenance; readers skip
//! comment lines.

use std::fs;
use std::path::Path;

use crate::error::{LabError, Result};

/// Provenance stamped onto run-plan artifacts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub plan_hash: String,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("plan_hash={} steerlab-core={}", self.plan_hash, crate::VERSION)
    }
}

/// A parsed table: header plus string cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Indices of the named columns, failing on the first one missing.
    pub fn require(&self, names: &[&str]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.column(n)
                    .ok_or_else(|| LabError::Invalid(format!("table lacks column {n:?}")))
            })
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let bytes = fs::read(path).map_err(|e| LabError::io(path, e))?;
    parse_table(&bytes)
}

pub fn parse_table(bytes: &[u8]) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(bytes);
    let header = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        rows.push(record?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

pub fn table_bytes(
    provenance: Option<&Provenance>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(p) = provenance {
        out.extend_from_slice(b"# ");
        out.extend_from_slice(p.comment().as_bytes());
        out.push(b'\n');
    }
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row)?;
        }
        writer.flush().map_err(|e| LabError::io("<table>", e))?;
    }
    Ok(out)
}

pub fn write_table(
    path: &Path,
    provenance: Option<&Provenance>,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let bytes = table_bytes(provenance, header, rows)?;
    write_bytes(path, &bytes)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn parse_bool(cell: &str) -> Result<bool> {
    match cell.trim() {
        "true" | "1" | "TRUE" | "True" => Ok(true),
        "false" | "0" | "FALSE" | "False" => Ok(false),
        other => Err(LabError::Invalid(format!("not a boolean: {other:?}"))),
    }
}

pub fn parse_opt_i64(cell: &str) -> Result<Option<i64>> {
    let t = cell.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse()
        .map(Some)
        .map_err(|_| LabError::Invalid(format!("not an integer: {t:?}")))
}

pub fn parse_f64(cell: &str) -> Result<f64> {
    cell.trim()
        .parse()
        .map_err(|_| LabError::Invalid(format!("not a number: {cell:?}")))
}

pub fn opt_cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
