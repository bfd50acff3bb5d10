// SPDX-License-Identifier: MIT OR Apache-2.0

//! Mean-difference realization directions, projection, and readout.
//!
//! A direction is `normalize(mean(realized) − mean(paper))` over the final
//! token activations of a pair list at one layer. Sums run in `pair_id` order,
//! so training is invariant to how the pair list is permuted.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{ActivationSet, FINAL_POSITION};
use crate::corpus::MatchedPair;
use crate::error::{LabError, Result};

labeled_enum! {
    Variant {
        TrainOnly => "train_only",
        AllPairs => "all_pairs",
    }
}

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Direction {
    pub layer: usize,
    pub variant: Variant,
    /// Euclidean norm of the mean difference before normalisation.
    pub raw_norm: f64,
    pub train_fingerprint: String,
    /// Unit-length vector of length `d_model`.
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_hash: Option<String>,
}

impl Direction {
    /// Normalises `raw` and records its norm.
    pub fn from_raw(
        layer: usize,
        raw: Vec<f64>,
        variant: Variant,
        train_fingerprint: String,
    ) -> Result<Self> {
        let raw_norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if raw_norm == 0.0 {
            return Err(LabError::ZeroDifference);
        }
        if !raw_norm.is_finite() {
            return Err(LabError::Invalid("direction has non-finite entries".into()));
        }
        let vector = raw.into_iter().map(|x| x / raw_norm).collect();
        Ok(Direction {
            layer,
            variant,
            raw_norm,
            train_fingerprint,
            vector,
            plan_hash: None,
        })
    }

    /// Short content hash of `(layer, vector)`, used as the direction reference
    /// in steering specs and manifests.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.layer as u64).to_le_bytes());
        for v in &self.vector {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("direction serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Direction = serde_json::from_str(text)?;
        let norm = d.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(LabError::Invalid(format!(
                "direction vector has norm {norm}, expected 1"
            )));
        }
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::tables::write_bytes(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Hash of the sorted training prompt ids.
pub fn fingerprint<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.sort_unstable();
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

pub fn train_direction(
    activations: &ActivationSet,
    pairs: &[MatchedPair],
    layer: usize,
    variant: Variant,
) -> Result<Direction> {
    if pairs.is_empty() {
        return Err(LabError::InsufficientData("no training pairs".into()));
    }
    let mut ordered: Vec<&MatchedPair> = pairs.iter().collect();
    ordered.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let d = activations.d_model;
    let mut realized = vec![0.0f64; d];
    let mut paper = vec![0.0f64; d];
    for pair in &ordered {
        let r = activations.require(&pair.realized_prompt_id, layer, FINAL_POSITION)?;
        let p = activations.require(&pair.paper_prompt_id, layer, FINAL_POSITION)?;
        for k in 0..d {
            realized[k] += r[k] as f64;
            paper[k] += p[k] as f64;
        }
    }
    let n = ordered.len() as f64;
    let diff: Vec<f64> = realized
        .iter()
        .zip(&paper)
        .map(|(r, p)| r / n - p / n)
        .collect();

    let fp = fingerprint(
        ordered
            .iter()
            .flat_map(|p| [p.paper_prompt_id.as_str(), p.realized_prompt_id.as_str()]),
    );
    Direction::from_raw(layer, diff, variant, fp)
}

pub fn project(activation: &[f32], direction: &Direction) -> Result<f64> {
    if activation.len() != direction.dim() {
        return Err(LabError::LengthMismatch {
            expected: direction.dim(),
            found: activation.len(),
        });
    }
    Ok(activation
        .iter()
        .zip(&direction.vector)
        .map(|(&a, v)| a as f64 * v)
        .sum())
}

pub fn project_f64(activation: &[f64], direction: &Direction) -> Result<f64> {
    if activation.len() != direction.dim() {
        return Err(LabError::LengthMismatch {
            expected: direction.dim(),
            found: activation.len(),
        });
    }
    Ok(activation.iter().zip(&direction.vector).map(|(a, v)| a * v).sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDelta {
    pub pair_id: String,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReport {
    pub split: String,
    pub n_pairs: usize,
    pub mean_projection_delta: f64,
    pub correct_direction_rate: f64,
    pub correct_count: usize,
    /// Pairs with a delta of exactly zero; counted as incorrect.
    pub ties: usize,
    pub per_pair: Vec<PairDelta>,
}

impl ReadoutReport {
    /// One row in the by-split readout table layout:
    /// `pairs & mean delta & correct %`.
    pub fn table_row(&self) -> String {
        format!(
            "{} & {:.2} & {:.1}\\%",
            self.n_pairs,
            self.mean_projection_delta,
            100.0 * self.correct_direction_rate
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Realized-minus-paper projection deltas along `direction`, one per pair.
pub fn readout_eval(
    direction: &Direction,
    activations: &ActivationSet,
    pairs: &[MatchedPair],
) -> Result<ReadoutReport> {
    if pairs.is_empty() {
        return Err(LabError::InsufficientData("no pairs to evaluate".into()));
    }
    let mut ordered: Vec<&MatchedPair> = pairs.iter().collect();
    ordered.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let mut per_pair = Vec::with_capacity(ordered.len());
    for pair in &ordered {
        let r = activations.require(&pair.realized_prompt_id, direction.layer, FINAL_POSITION)?;
        let p = activations.require(&pair.paper_prompt_id, direction.layer, FINAL_POSITION)?;
        per_pair.push(PairDelta {
            pair_id: pair.pair_id.clone(),
            delta: project(r, direction)? - project(p, direction)?,
        });
    }
    let n = per_pair.len();
    let correct_count = per_pair.iter().filter(|d| d.delta > 0.0).count();
    let ties = per_pair.iter().filter(|d| d.delta == 0.0).count();
    let mean = per_pair.iter().map(|d| d.delta).sum::<f64>() / n as f64;

    let first = ordered[0].split;
    let split = if ordered.iter().all(|p| p.split == first) {
        first.to_string()
    } else {
        "mixed".to_string()
    };
    Ok(ReadoutReport {
        split,
        n_pairs: n,
        mean_projection_delta: mean,
        correct_direction_rate: correct_count as f64 / n as f64,
        correct_count,
        ties,
        per_pair,
    })
}

/// Subtracts each split's mean from its values. Presentation only; readout
/// deltas are always computed on raw projections.
pub fn center_within_split(
    projections: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    projections
        .iter()
        .map(|(split, values)| {
            if values.is_empty() {
                return Err(LabError::InsufficientData(format!("split {split} is empty")));
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            Ok((split.clone(), values.iter().map(|v| v - mean).collect()))
        })
        .collect()
}
