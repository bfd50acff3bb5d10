// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use super::ols::{fit_ols_hc3, RegressionResult};
use super::spec::{Factor, Outcome, RegressionSpec, Term};
use crate::corpus::ConditionFamily;
use crate::error::{LabError, Result};
use crate::tables::{parse_f64, Table};

labeled_enum! {
    PairLevel {
        RawPrompt => "raw_prompt",
        WithinPair => "within_pair",
    }
}

/// Prompt-level controls for projection regressions.
pub const PROMPT_CONTROLS: [Factor; 5] = [
    Factor::PairRole,
    Factor::Domain,
    Factor::OutcomeValence,
    Factor::AmountBucket,
    Factor::PromptSource,
];

/// Condition indicators for one family (its baseline omitted) with model,
/// temperature, and prompt-version fixed effects. Rows from the other family
/// are excluded.
pub fn condition_regression(
    table: &Table,
    outcome: Outcome,
    family: ConditionFamily,
) -> Result<RegressionResult> {
    let col = table.require(&["condition"])?[0];
    let members: Vec<&str> = family.conditions().map(|c| c.as_str()).collect();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .filter(|r| members.contains(&r[col].trim()))
        .cloned()
        .collect();
    let baseline = family.baseline().as_str();
    if !rows.iter().any(|r| r[col].trim() == baseline) {
        return Err(LabError::BaselineAbsent {
            factor: "condition".into(),
            level: baseline.into(),
        });
    }
    let subset = Table {
        header: table.header.clone(),
        rows,
    };
    let mut spec = RegressionSpec::new(outcome);
    spec.predictors = vec![Term::Condition];
    spec.fixed_effects = vec![Factor::Model, Factor::Temperature, Factor::PromptVersion];
    spec.baselines.insert("condition".into(), baseline.into());
    fit_ols_hc3(&spec, &subset)
}

/// Projection-behavior regression.
///
/// `RawPrompt` regresses `outcome` on the standardised `projection` column,
/// optionally with [`PROMPT_CONTROLS`]. `WithinPair` regresses a delta outcome
/// on `projection_delta`; a pair table with one row per prompt is first
/// reduced by [`within_pair_table`]. Controls there exclude `pair_role`.
pub fn projection_behavior_regression(
    table: &Table,
    level: PairLevel,
    outcome: Outcome,
    controls: bool,
) -> Result<RegressionResult> {
    match level {
        PairLevel::RawPrompt => {
            let mut spec = RegressionSpec::new(outcome);
            spec.predictors = vec![Term::StandardizedProjection];
            if controls {
                spec.fixed_effects = PROMPT_CONTROLS.to_vec();
            }
            fit_ols_hc3(&spec, table)
        }
        PairLevel::WithinPair => {
            if !matches!(outcome, Outcome::WagerDelta | Outcome::RiskDelta) {
                return Err(LabError::Invalid(format!(
                    "within-pair analysis needs a delta outcome, got {outcome}"
                )));
            }
            let owned;
            let deltas = if table.column("projection_delta").is_some() {
                table
            } else {
                owned = within_pair_table(table)?;
                &owned
            };
            let col = deltas.require(&["projection_delta"])?[0];
            let values: Vec<f64> = deltas
                .rows
                .iter()
                .filter(|r| !r[col].trim().is_empty())
                .map(|r| parse_f64(&r[col]))
                .collect::<Result<_>>()?;
            if values.windows(2).all(|w| w[0] == w[1]) {
                return Err(LabError::ZeroVariance("projection_delta".into()));
            }
            let mut spec = RegressionSpec::new(outcome);
            spec.predictors = vec![Term::ProjectionDelta];
            if controls {
                spec.fixed_effects = PROMPT_CONTROLS[1..].to_vec();
            }
            fit_ols_hc3(&spec, deltas)
        }
    }
}

fn is_realized(role: &str) -> Option<bool> {
    let r = role.trim();
    if r.starts_with("realized") {
        Some(true)
    } else if r.starts_with("paper") {
        Some(false)
    } else {
        None
    }
}

/// Reduces a per-prompt pair table (`pair_id`, `pair_role`, `projection`,
/// `wager`, `risk_profile`, controls) to one row per pair of
/// realized-minus-paper deltas. Controls are taken from the realized row.
/// Pairs with a missing value on either side get an empty delta cell.
pub fn within_pair_table(table: &Table) -> Result<Table> {
    let idx = table.require(&["pair_id", "pair_role", "projection", "wager", "risk_profile"])?;
    let controls: Vec<(&str, Option<usize>)> = PROMPT_CONTROLS[1..]
        .iter()
        .map(|f| (f.as_str(), table.column(f.as_str())))
        .collect();

    let mut sides: BTreeMap<&str, [Option<&Vec<String>>; 2]> = BTreeMap::new();
    for (line, row) in table.rows.iter().enumerate() {
        let role = is_realized(&row[idx[1]]).ok_or_else(|| LabError::MalformedLine {
            line: line + 2,
            message: format!("unknown pair_role {:?}", row[idx[1]]),
        })?;
        let slot = &mut sides.entry(row[idx[0]].trim()).or_default()[role as usize];
        if slot.replace(row).is_some() {
            return Err(LabError::DuplicateId {
                line: line + 2,
                id: row[idx[0]].clone(),
            });
        }
    }

    let delta = |r: &Vec<String>, p: &Vec<String>, c: usize| -> Result<String> {
        let (a, b) = (r[c].trim(), p[c].trim());
        if a.is_empty() || b.is_empty() || a == "NA" || b == "NA" {
            return Ok(String::new());
        }
        Ok((parse_f64(a)? - parse_f64(b)?).to_string())
    };

    let mut header: Vec<String> = ["pair_id", "projection_delta", "wager_delta", "risk_delta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(controls.iter().filter(|c| c.1.is_some()).map(|c| c.0.to_string()));

    let mut rows = Vec::new();
    for (pair_id, [paper, realized]) in sides {
        let (Some(p), Some(r)) = (paper, realized) else {
            return Err(LabError::UnpairedPair {
                pair_id: pair_id.to_string(),
                reason: "pair table needs one paper and one realized row".into(),
            });
        };
        let mut row = vec![
            pair_id.to_string(),
            delta(r, p, idx[2])?,
            delta(r, p, idx[3])?,
            delta(r, p, idx[4])?,
        ];
        row.extend(controls.iter().filter_map(|c| c.1).map(|c| r[c].clone()));
        rows.push(row);
    }
    Ok(Table { header, rows })
}
