// SPDX-License-Identifier: MIT OR Apache-2.0

//! Two-integer answer contract: parsing, validity, and compliance audits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::PromptCorpus;
use crate::error::{LabError, Result};
use crate::scale::Scale;
use crate::steering::ResponseRow;
use crate::tables::{self, Provenance};

pub const WAGER_RANGE: (i64, i64) = (1, 1000);
pub const RISK_RANGE: (i64, i64) = (1, 5);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    /// First integer run, if any.
    pub wager: Option<i64>,
    /// Second integer run, if any.
    pub risk: Option<i64>,
    pub integer_runs: usize,
    pub valid: bool,
    pub exactly_two: bool,
}

impl ParsedResponse {
    pub fn valid_wager(&self) -> Option<i64> {
        self.valid.then_some(self.wager).flatten()
    }

    pub fn valid_risk(&self) -> Option<i64> {
        self.valid.then_some(self.risk).flatten()
    }
}

fn in_range(v: Option<i64>, (lo, hi): (i64, i64)) -> bool {
    v.is_some_and(|v| (lo..=hi).contains(&v))
}

/// Integer runs are maximal runs of ASCII digits, each optionally preceded by
/// an immediately adjacent `-`. Values saturate instead of overflowing.
pub fn integer_runs(text: &str) -> Vec<i64> {
    let bytes = text.as_bytes();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let negative = i > 0 && bytes[i - 1] == b'-';
        let mut value: i64 = 0;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            let digit = (bytes[i] - b'0') as i64;
            value = value.saturating_mul(10).saturating_add(digit);
            i += 1;
        }
        runs.push(if negative { -value } else { value });
    }
    runs
}

pub fn parse_response(text: &str) -> ParsedResponse {
    let runs = integer_runs(text);
    let wager = runs.first().copied();
    let risk = runs.get(1).copied();
    let valid = in_range(wager, WAGER_RANGE) && in_range(risk, RISK_RANGE);
    ParsedResponse {
        wager,
        risk,
        integer_runs: runs.len(),
        valid,
        exactly_two: valid && runs.len() == 2,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceCell {
    pub noncompliant: usize,
    pub total: usize,
}

impl ComplianceCell {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.noncompliant as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComplianceReport {
    pub cells: BTreeMap<(Scale, String), ComplianceCell>,
}

pub const COMPLIANCE_HEADER: [&str; 5] = ["scale", "source", "noncompliant", "total", "rate"];

impl ComplianceReport {
    pub fn cell(&self, scale: Scale, source: &str) -> Option<ComplianceCell> {
        self.cells.get(&(scale, source.to_string())).copied()
    }

    pub fn total_rows(&self) -> usize {
        self.cells.values().map(|c| c.total).sum()
    }

    pub fn merge(&mut self, other: &ComplianceReport) {
        for (key, cell) in &other.cells {
            let entry = self.cells.entry(key.clone()).or_default();
            entry.noncompliant += cell.noncompliant;
            entry.total += cell.total;
        }
    }

    pub fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|((scale, source), c)| {
                vec![
                    scale.to_string(),
                    source.clone(),
                    c.noncompliant.to_string(),
                    c.total.to_string(),
                    format!("{:.4}", c.rate()),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self, provenance: Option<&Provenance>) -> Result<Vec<u8>> {
        tables::table_bytes(provenance, &COMPLIANCE_HEADER, &self.rows())
    }
}

/// Counts rows failing the exactly-two rule, grouped by scale and prompt source.
pub fn compliance_audit(rows: &[ResponseRow], corpus: &PromptCorpus) -> Result<ComplianceReport> {
    let mut report = ComplianceReport::default();
    for row in rows {
        let record = corpus
            .get(&row.prompt_id)
            .ok_or_else(|| LabError::UnknownPrompt(row.prompt_id.clone()))?;
        let cell = report
            .cells
            .entry((row.scale, record.source.clone()))
            .or_default();
        cell.total += 1;
        if !row.parsed.exactly_two {
            cell.noncompliant += 1;
        }
    }
    Ok(report)
}
