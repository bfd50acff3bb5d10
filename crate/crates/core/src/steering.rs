// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dose-response sweeps and matched deltas against the in-run scale-0 arm.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, PositionMode, RunManifest, Steering};
use crate::behavior::{integer_runs, parse_response, ParsedResponse, RISK_RANGE, WAGER_RANGE};
use crate::corpus::PromptRecord;
use crate::direction::Direction;
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::scale::{format_number, Scale};
use crate::stats::{mean, median};
use crate::tables::{self, Provenance, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub prompt_id: String,
    pub scale: Scale,
    pub raw_text: String,
    pub parsed: ParsedResponse,
    /// Generation failed; `raw_text` is empty and the row never matches.
    pub failure: bool,
    pub manifest_ref: Option<String>,
}

impl ResponseRow {
    pub fn from_text(prompt_id: &str, scale: Scale, raw_text: &str) -> Self {
        ResponseRow {
            prompt_id: prompt_id.to_string(),
            scale,
            raw_text: raw_text.to_string(),
            parsed: parse_response(raw_text),
            failure: false,
            manifest_ref: None,
        }
    }
}

pub const RESPONSE_HEADER: [&str; 8] = [
    "prompt_id",
    "scale",
    "raw_text",
    "wager",
    "risk",
    "valid",
    "exactly_two",
    "failure_flag",
];

pub fn response_rows_csv(rows: &[ResponseRow], provenance: Option<&Provenance>) -> Result<Vec<u8>> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.prompt_id.clone(),
                r.scale.to_string(),
                r.raw_text.clone(),
                tables::opt_cell(r.parsed.wager),
                tables::opt_cell(r.parsed.risk),
                r.parsed.valid.to_string(),
                r.parsed.exactly_two.to_string(),
                r.failure.to_string(),
            ]
        })
        .collect();
    tables::table_bytes(provenance, &RESPONSE_HEADER, &body)
}

/// Reads a response table. The stored `wager`/`risk`/`valid`/`exactly_two`
/// columns are authoritative; they must satisfy the contract's implications.
pub fn parse_response_rows(table: &Table) -> Result<Vec<ResponseRow>> {
    let idx = table.require(&RESPONSE_HEADER)?;
    let mut rows = Vec::with_capacity(table.rows.len());
    for (i, cells) in table.rows.iter().enumerate() {
        let line = i + 2;
        let bad = |m: String| LabError::MalformedLine { line, message: m };
        let get = |k: usize| cells.get(idx[k]).map(String::as_str).unwrap_or("");
        let scale: Scale = get(1).parse().map_err(|e: LabError| bad(e.to_string()))?;
        let raw_text = get(2).to_string();
        let parsed = ParsedResponse {
            wager: tables::parse_opt_i64(get(3)).map_err(|e| bad(e.to_string()))?,
            risk: tables::parse_opt_i64(get(4)).map_err(|e| bad(e.to_string()))?,
            integer_runs: integer_runs(&raw_text).len(),
            valid: tables::parse_bool(get(5)).map_err(|e| bad(e.to_string()))?,
            exactly_two: tables::parse_bool(get(6)).map_err(|e| bad(e.to_string()))?,
        };
        let in_range = |v: Option<i64>, (lo, hi): (i64, i64)| v.is_some_and(|v| v >= lo && v <= hi);
        if parsed.exactly_two && !parsed.valid {
            return Err(bad("exactly_two set on an invalid row".into()));
        }
        if parsed.valid && !(in_range(parsed.wager, WAGER_RANGE) && in_range(parsed.risk, RISK_RANGE)) {
            return Err(bad("valid row with missing or out-of-range values".into()));
        }
        rows.push(ResponseRow {
            prompt_id: get(0).to_string(),
            scale,
            raw_text,
            parsed,
            failure: tables::parse_bool(get(7)).map_err(|e| bad(e.to_string()))?,
            manifest_ref: None,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub layer: usize,
    pub scales: Vec<Scale>,
    pub position_mode: PositionMode,
    pub max_new_tokens: usize,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    /// One row per (prompt, scale), sorted by prompt id then scale.
    pub rows: Vec<ResponseRow>,
    /// Scale-0 generations with no hook installed. Never used as a baseline.
    pub hook_free: Vec<ResponseRow>,
    pub manifest: RunManifest,
}

/// Generates every (prompt, scale) cell under identical greedy decoding.
/// Scale 0 runs with the hook installed at zero strength.
pub fn run_dose_sweep(
    backend: &Backend,
    prompts: &[&PromptRecord],
    direction: &Direction,
    config: &SweepConfig,
    exec: Exec,
) -> Result<SweepOutput> {
    let unique: BTreeSet<Scale> = config.scales.iter().copied().collect();
    if unique.len() != config.scales.len() {
        return Err(LabError::Invalid("duplicate steering scales".into()));
    }
    if !unique.contains(&Scale::ZERO) {
        return Err(LabError::Invalid(
            "scale list must include 0 for the in-run baseline".into(),
        ));
    }
    let n_layers = backend.config().n_layers;
    for layer in [config.layer, direction.layer] {
        if layer >= n_layers {
            return Err(LabError::LayerOutOfRange { layer, n_layers });
        }
    }
    if let Some(p) = prompts.iter().find(|p| !p.split.is_behavior()) {
        return Err(LabError::Invalid(format!(
            "prompt {:?} is in split {}, not a behavior split",
            p.id, p.split
        )));
    }

    let scales: Vec<Scale> = unique.into_iter().collect();
    let arms = scales.len() + 1;
    let cells = exec.map_range(prompts.len() * arms, |cell| {
        let rec = prompts[cell / arms];
        let arm = cell % arms;
        let steering = scales
            .get(arm)
            .map(|&s| Steering::new(direction, config.layer, s, config.position_mode));
        let scale = scales.get(arm).copied().unwrap_or(Scale::ZERO);
        let gen = backend.run_text(&rec.id, &rec.text, steering.as_ref(), None, config.max_new_tokens);
        (rec.id.as_str(), scale, arm == scales.len(), gen)
    });

    let mut manifest = RunManifest::new(backend.config());
    manifest.direction_hash = Some(direction.id());
    manifest.layer = Some(config.layer);
    manifest.scales = scales.clone();
    manifest.position_mode = Some(config.position_mode);
    manifest.max_new_tokens = Some(config.max_new_tokens);

    let mut rows = Vec::new();
    let mut hook_free = Vec::new();
    let mut failed = BTreeMap::new();
    for (id, scale, free, gen) in cells {
        let row = match gen {
            Ok(g) => ResponseRow::from_text(id, scale, &g.text),
            Err(e) => {
                failed.entry(id.to_string()).or_insert_with(|| e.to_string());
                ResponseRow {
                    failure: true,
                    ..ResponseRow::from_text(id, scale, "")
                }
            }
        };
        if free {
            hook_free.push(row);
        } else {
            rows.push(row);
        }
    }
    manifest.failed_prompts = failed
        .into_iter()
        .map(|(prompt_id, reason)| crate::backend::FailedPrompt { prompt_id, reason })
        .collect();

    let reference = manifest.reference();
    for r in rows.iter_mut().chain(hook_free.iter_mut()) {
        r.manifest_ref = Some(reference.clone());
    }
    rows.sort_by(|a, b| (&a.prompt_id, a.scale).cmp(&(&b.prompt_id, b.scale)));
    hook_free.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    Ok(SweepOutput {
        rows,
        hook_free,
        manifest,
    })
}

labeled_enum! {
    DeltaSubset {
        AllValid => "all_valid",
        ExactlyTwo => "exactly_two_integer",
    }
}

impl DeltaSubset {
    pub fn admits(self, row: &ResponseRow) -> bool {
        !row.failure
            && match self {
                DeltaSubset::AllValid => row.parsed.valid,
                DeltaSubset::ExactlyTwo => row.parsed.exactly_two,
            }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptDelta {
    pub prompt_id: String,
    pub wager_delta: i64,
    pub risk_delta: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub scale: Scale,
    pub subset: DeltaSubset,
    pub matched_rows: usize,
    pub mean_wager_delta: Option<f64>,
    pub mean_risk_delta: Option<f64>,
    pub median_wager_delta: Option<f64>,
    pub median_risk_delta: Option<f64>,
    /// Sorted by prompt id.
    pub per_prompt: Vec<PromptDelta>,
}

pub const DELTA_HEADER: [&str; 7] = [
    "scale",
    "subset",
    "matched_rows",
    "mean_wager_delta",
    "mean_risk_delta",
    "median_wager_delta",
    "median_risk_delta",
];

pub const PER_PROMPT_HEADER: [&str; 5] = ["prompt_id", "scale", "subset", "wager_delta", "risk_delta"];

impl DeltaReport {
    fn summarize(scale: Scale, subset: DeltaSubset, per_prompt: Vec<PromptDelta>) -> Self {
        let w: Vec<f64> = per_prompt.iter().map(|d| d.wager_delta as f64).collect();
        let r: Vec<f64> = per_prompt.iter().map(|d| d.risk_delta as f64).collect();
        DeltaReport {
            scale,
            subset,
            matched_rows: per_prompt.len(),
            mean_wager_delta: mean(&w),
            mean_risk_delta: mean(&r),
            median_wager_delta: median(&w),
            median_risk_delta: median(&r),
            per_prompt,
        }
    }

    /// Recomputes every summary from `per_prompt` and compares.
    pub fn verify(&self) -> Result<()> {
        let again = Self::summarize(self.scale, self.subset, self.per_prompt.clone());
        if again != *self {
            return Err(LabError::Invalid(format!(
                "delta report for scale {} is not self-consistent",
                self.scale
            )));
        }
        Ok(())
    }

    /// `scale & matched & mean wager & mean risk & median wager / median risk`
    pub fn table_row(&self) -> String {
        let f = |v: Option<f64>, digits: usize| v.map_or("NA".to_string(), |x| format!("{x:.digits$}"));
        let m = |v: Option<f64>| v.map_or("NA".to_string(), format_number);
        format!(
            "{} & {} & {} & {} & {} / {}",
            self.scale,
            self.matched_rows,
            f(self.mean_wager_delta, 2),
            f(self.mean_risk_delta, 3),
            m(self.median_wager_delta),
            m(self.median_risk_delta)
        )
    }

    pub fn summary_cells(&self) -> Vec<String> {
        let c = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.scale.to_string(),
            self.subset.to_string(),
            self.matched_rows.to_string(),
            c(self.mean_wager_delta),
            c(self.mean_risk_delta),
            c(self.median_wager_delta),
            c(self.median_risk_delta),
        ]
    }

    pub fn per_prompt_cells(&self) -> Vec<Vec<String>> {
        self.per_prompt
            .iter()
            .map(|d| {
                vec![
                    d.prompt_id.clone(),
                    self.scale.to_string(),
                    self.subset.to_string(),
                    d.wager_delta.to_string(),
                    d.risk_delta.to_string(),
                ]
            })
            .collect()
    }
}

/// Per-prompt `value(scale) − value(0)` over prompts admitted by `subset` in
/// both arms.
pub fn matched_deltas(rows: &[ResponseRow], scale: Scale, subset: DeltaSubset) -> Result<DeltaReport> {
    let mut arms: BTreeMap<Scale, BTreeMap<&str, &ResponseRow>> = BTreeMap::new();
    for row in rows {
        if row.scale != scale && !row.scale.is_zero() {
            continue;
        }
        if arms
            .entry(row.scale)
            .or_default()
            .insert(&row.prompt_id, row)
            .is_some()
        {
            return Err(LabError::Invalid(format!(
                "duplicate row for prompt {:?} at scale {}",
                row.prompt_id, row.scale
            )));
        }
    }
    let base = arms.get(&Scale::ZERO).ok_or_else(|| LabError::MissingScale("0".into()))?;
    let steered = arms.get(&scale).ok_or_else(|| LabError::MissingScale(scale.to_string()))?;

    let mut per_prompt = Vec::new();
    for (id, s) in steered {
        let Some(b) = base.get(id) else { continue };
        if !(subset.admits(s) && subset.admits(b)) {
            continue;
        }
        per_prompt.push(PromptDelta {
            prompt_id: id.to_string(),
            wager_delta: s.parsed.wager.unwrap_or(0) - b.parsed.wager.unwrap_or(0),
            risk_delta: s.parsed.risk.unwrap_or(0) - b.parsed.risk.unwrap_or(0),
        });
    }
    let report = DeltaReport::summarize(scale, subset, per_prompt);
    report.verify()?;
    Ok(report)
}

/// All non-zero scales present in `rows`, ascending.
pub fn steered_scales(rows: &[ResponseRow]) -> Vec<Scale> {
    rows.iter()
        .map(|r| r.scale)
        .filter(|s| !s.is_zero())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
