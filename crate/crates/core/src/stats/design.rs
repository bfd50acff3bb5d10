// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::spec::{Outcome, RegressionSpec, Term};
use crate::error::{LabError, Result};
use crate::tables::{parse_f64, Table};

pub const INTERCEPT: &str = "(Intercept)";

/// Dense design matrix with named columns.
#[derive(Clone, Debug)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Table row indices that entered the fit.
    pub rows_used: Vec<usize>,
}

fn missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

enum Block {
    Numeric { col: usize, standardize: bool },
    Dummies { col: usize, levels: Vec<String> },
}

/// Expands `spec` over `table`. Rows with a missing value in any used column
/// are dropped; categorical columns become `name[level]` indicators.
pub fn build_design(spec: &RegressionSpec, table: &Table) -> Result<Design> {
    spec.validate()?;
    let y_col = table.require(&[spec.outcome.column()])?[0];

    let mut categorical = Vec::new();
    let mut numeric = Vec::new();
    for t in &spec.predictors {
        let col = table.require(&[t.column()])?[0];
        match t {
            Term::Condition => categorical.push((t.column(), col)),
            _ => numeric.push(col),
        }
    }
    for f in &spec.fixed_effects {
        categorical.push((f.as_str(), table.require(&[f.as_str()])?[0]));
    }

    let used: Vec<usize> = std::iter::once(y_col)
        .chain(numeric.iter().copied())
        .chain(categorical.iter().map(|c| c.1))
        .collect();
    let rows_used: Vec<usize> = (0..table.rows.len())
        .filter(|&i| used.iter().all(|&c| !missing(table.rows[i].get(c).map_or("", |s| s))))
        .collect();
    let cell = |i: usize, c: usize| table.rows[i][c].trim();

    let mut blocks = Vec::new();
    let mut names = vec![INTERCEPT.to_string()];
    for t in &spec.predictors {
        let col = table.require(&[t.column()])?[0];
        match t {
            Term::Condition => {
                let levels = levels_without_baseline(spec, table, "condition", col, &rows_used)?;
                names.extend(levels.iter().map(|l| format!("condition[{l}]")));
                blocks.push(Block::Dummies { col, levels });
            }
            Term::StandardizedProjection => {
                names.push(t.as_str().to_string());
                blocks.push(Block::Numeric { col, standardize: true });
            }
            Term::ProjectionDelta => {
                names.push(t.as_str().to_string());
                blocks.push(Block::Numeric { col, standardize: false });
            }
        }
    }
    for f in &spec.fixed_effects {
        let col = table.require(&[f.as_str()])?[0];
        let levels = levels_without_baseline(spec, table, f.as_str(), col, &rows_used)?;
        names.extend(levels.iter().map(|l| format!("{f}[{l}]")));
        blocks.push(Block::Dummies { col, levels });
    }

    let n = rows_used.len();
    let p = names.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut y = DVector::<f64>::zeros(n);
    for (r, &i) in rows_used.iter().enumerate() {
        let v = parse_f64(cell(i, y_col))?;
        y[r] = match spec.outcome {
            Outcome::LogWager if v > 0.0 => v.ln(),
            Outcome::LogWager => {
                return Err(LabError::Invalid(format!("log_wager needs wager > 0, got {v}")))
            }
            _ => v,
        };
        x[(r, 0)] = 1.0;
    }

    let mut j = 1;
    for block in &blocks {
        match block {
            Block::Numeric { col, standardize } => {
                let mut v = Vec::with_capacity(n);
                for &i in &rows_used {
                    v.push(parse_f64(cell(i, *col))?);
                }
                if *standardize {
                    standardize_in_place(&mut v, &table.header[*col])?;
                }
                for (r, value) in v.into_iter().enumerate() {
                    x[(r, j)] = value;
                }
                j += 1;
            }
            Block::Dummies { col, levels } => {
                for (r, &i) in rows_used.iter().enumerate() {
                    if let Some(k) = levels.iter().position(|l| l == cell(i, *col)) {
                        x[(r, j + k)] = 1.0;
                    }
                }
                j += levels.len();
            }
        }
    }
    Ok(Design {
        names,
        x,
        y,
        rows_used,
    })
}

/// Sample standardisation (mean 0, SD 1 with the n − 1 denominator).
pub fn standardize_in_place(v: &mut [f64], what: &str) -> Result<()> {
    let n = v.len();
    if n < 2 {
        return Err(LabError::InsufficientData(format!("{what}: fewer than 2 values")));
    }
    let m = v.iter().sum::<f64>() / n as f64;
    let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        return Err(LabError::ZeroVariance(what.to_string()));
    }
    for x in v.iter_mut() {
        *x = (*x - m) / sd;
    }
    Ok(())
}

fn levels_without_baseline(
    spec: &RegressionSpec,
    table: &Table,
    name: &str,
    col: usize,
    rows: &[usize],
) -> Result<Vec<String>> {
    let mut levels: BTreeSet<String> = rows.iter().map(|&i| table.rows[i][col].trim().to_string()).collect();
    let baseline = match spec.baselines.get(name) {
        Some(b) => b.clone(),
        None => match levels.iter().next() {
            Some(first) => first.clone(),
            None => return Ok(Vec::new()),
        },
    };
    if !levels.remove(&baseline) {
        return Err(LabError::BaselineAbsent {
            factor: name.to_string(),
            level: baseline,
        });
    }
    Ok(levels.into_iter().collect())
}
