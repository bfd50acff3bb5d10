// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt corpus: records, condition taxonomy, matched pairs, and splits.
//!
//! A corpus file is UTF-8 with one JSON object per line. Each object carries
//! exactly the [`PromptRecord`] fields; unknown fields are rejected. Loading
//! validates id uniqueness, the one-paper/one-realized pairing per `pair_id`,
//! and the split/task contract.

mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub use synth::{plant_synthetic_pairs, SynthParams, SyntheticCorpus};

labeled_enum! {
    /// Which side of a matched pair a prompt sits on.
    Role {
        PaperOpen => "paper_open",
        RealizedClosed => "realized_closed",
    }
}

labeled_enum! {
    Domain {
        Finance => "finance",
        Reimbursement => "reimbursement",
        Budget => "budget",
        Compensation => "compensation",
        Academic => "academic",
        ProjectOutcome => "project_outcome",
        Casino => "casino",
    }
}

labeled_enum! {
    Split {
        DirectionTrain => "direction_train",
        DirectionVal => "direction_val",
        BehaviorEval => "behavior_eval",
        HeldoutReadout => "heldout_readout",
        HeldoutBehaviorEval => "heldout_behavior_eval",
    }
}

impl Split {
    /// Behavior splits carry a downstream task; the others are readout-only.
    pub fn is_behavior(self) -> bool {
        matches!(self, Split::BehaviorEval | Split::HeldoutBehaviorEval)
    }
}

labeled_enum! {
    /// The eleven outcome conditions of the behavioral vignettes.
    Condition {
        PaperEven => "paper_even",
        PaperLossSmall => "paper_loss_small",
        PaperLossMedium => "paper_loss_medium",
        PaperLossLarge => "paper_loss_large",
        PaperGainSmall => "paper_gain_small",
        PaperGainLarge => "paper_gain_large",
        RealizedLossSmall => "realized_loss_small",
        RealizedLossMedium => "realized_loss_medium",
        RealizedLossLarge => "realized_loss_large",
        RealizedLossExtreme => "realized_loss_extreme",
        RealizedGain => "realized_gain",
    }
}

labeled_enum! {
    /// Condition families, each with its own regression baseline.
    ConditionFamily {
        Paper => "paper",
        Realized => "realized",
    }
}

impl Condition {
    pub fn family(self) -> ConditionFamily {
        if self.as_str().starts_with("paper_") {
            ConditionFamily::Paper
        } else {
            ConditionFamily::Realized
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Condition::PaperEven | Condition::RealizedLossSmall)
    }
}

impl ConditionFamily {
    pub fn baseline(self) -> Condition {
        match self {
            ConditionFamily::Paper => Condition::PaperEven,
            ConditionFamily::Realized => Condition::RealizedLossSmall,
        }
    }

    pub fn conditions(self) -> impl Iterator<Item = Condition> {
        Condition::ALL.iter().copied().filter(move |c| c.family() == self)
    }
}

labeled_enum! {
    PromptVersion {
        Absolute => "absolute",
        BalanceRelative => "balance_relative",
    }
}

labeled_enum! {
    Task {
        WagerRisk => "wager_risk",
        Classification => "classification",
        None => "none",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionLabel {
    pub name: Condition,
    pub prompt_version: PromptVersion,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub id: String,
    pub pair_id: String,
    pub role: Role,
    pub domain: Domain,
    pub split: Split,
    pub source: String,
    #[serde(default)]
    pub condition: Option<ConditionLabel>,
    pub task: Task,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pair_id: String,
    pub paper_prompt_id: String,
    pub realized_prompt_id: String,
    pub split: Split,
    pub domain: Domain,
}

/// A validated, immutable corpus.
#[derive(Clone, Debug)]
pub struct PromptCorpus {
    records: Vec<PromptRecord>,
    by_id: HashMap<String, usize>,
    // pair_id -> (paper index, realized index); BTreeMap gives pair_id order
    pairs: BTreeMap<String, (usize, usize)>,
}

impl PromptCorpus {
    /// Validates `records` (in file order; `line` numbers are 1-based
    /// positions in that order).
    pub fn from_records(records: Vec<PromptRecord>) -> Result<Self> {
        let lines: Vec<usize> = (1..=records.len()).collect();
        Self::from_numbered(records, &lines)
    }

    fn from_numbered(records: Vec<PromptRecord>, lines: &[usize]) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        let mut members: BTreeMap<String, (Option<usize>, Option<usize>)> = BTreeMap::new();

        for (idx, rec) in records.iter().enumerate() {
            let line = lines[idx];
            if rec.id.is_empty() || rec.id.starts_with('#') {
                return Err(LabError::MalformedLine {
                    line,
                    message: format!("id {:?} must be non-empty and not start with '#'", rec.id),
                });
            }
            if rec.pair_id.is_empty() {
                return Err(LabError::MalformedLine {
                    line,
                    message: "empty pair_id".into(),
                });
            }
            if by_id.insert(rec.id.clone(), idx).is_some() {
                return Err(LabError::DuplicateId {
                    line,
                    id: rec.id.clone(),
                });
            }
            let task_ok = if rec.split.is_behavior() {
                matches!(rec.task, Task::WagerRisk | Task::Classification)
            } else {
                rec.task == Task::None
            };
            if !task_ok {
                return Err(LabError::MalformedLine {
                    line,
                    message: format!("task {} not allowed in split {}", rec.task, rec.split),
                });
            }

            let slot = members.entry(rec.pair_id.clone()).or_default();
            let side = match rec.role {
                Role::PaperOpen => &mut slot.0,
                Role::RealizedClosed => &mut slot.1,
            };
            if let Some(prev) = side.replace(idx) {
                return Err(LabError::UnpairedPair {
                    pair_id: rec.pair_id.clone(),
                    reason: format!(
                        "two {} records ({:?} and {:?})",
                        rec.role, records[prev].id, rec.id
                    ),
                });
            }
        }

        let mut pairs = BTreeMap::new();
        for (pair_id, slot) in members {
            match slot {
                (Some(p), Some(r)) => {
                    if records[p].split != records[r].split {
                        return Err(LabError::UnpairedPair {
                            pair_id,
                            reason: format!(
                                "members in different splits ({} vs {})",
                                records[p].split, records[r].split
                            ),
                        });
                    }
                    pairs.insert(pair_id, (p, r));
                }
                (p, _) => {
                    let missing = if p.is_some() { Role::RealizedClosed } else { Role::PaperOpen };
                    return Err(LabError::UnpairedPair {
                        pair_id,
                        reason: format!("no {missing} record"),
                    });
                }
            }
        }

        Ok(PromptCorpus {
            records,
            by_id,
            pairs,
        })
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PromptRecord = serde_json::from_str(line).map_err(|e| {
                let message = e.to_string();
                if message.contains("unknown variant") {
                    LabError::MalformedLine {
                        line: i + 1,
                        message: format!("unknown enum value: {message}"),
                    }
                } else {
                    LabError::MalformedLine {
                        line: i + 1,
                        message,
                    }
                }
            })?;
            records.push(rec);
            lines.push(i + 1);
        }
        Self::from_numbered(records, &lines)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Merges several corpora, revalidating the union.
    pub fn merge(parts: Vec<PromptCorpus>) -> Result<Self> {
        let records = parts.into_iter().flat_map(|c| c.records).collect();
        Self::from_records(records)
    }

    pub fn records(&self) -> &[PromptRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn get(&self, id: &str) -> Option<&PromptRecord> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    /// Matched pairs whose members carry `split`, sorted by `pair_id`.
    pub fn pair_index(&self, split: Split) -> Vec<MatchedPair> {
        self.pairs_where(|s| s == split)
    }

    /// Every matched pair, sorted by `pair_id`.
    pub fn all_pairs(&self) -> Vec<MatchedPair> {
        self.pairs_where(|_| true)
    }

    fn pairs_where(&self, keep: impl Fn(Split) -> bool) -> Vec<MatchedPair> {
        self.pairs
            .iter()
            .filter(|(_, &(p, _))| keep(self.records[p].split))
            .map(|(pair_id, &(p, r))| MatchedPair {
                pair_id: pair_id.clone(),
                paper_prompt_id: self.records[p].id.clone(),
                realized_prompt_id: self.records[r].id.clone(),
                split: self.records[p].split,
                domain: self.records[p].domain,
            })
            .collect()
    }

    /// Records in behavior splits with the given task, in file order.
    pub fn behavior_prompts(&self, task: Task) -> Vec<&PromptRecord> {
        self.records
            .iter()
            .filter(|r| r.split.is_behavior() && r.task == task)
            .collect()
    }
}

pub fn pair_index(corpus: &PromptCorpus, split: Split) -> Vec<MatchedPair> {
    corpus.pair_index(split)
}

pub fn load_corpus(path: &Path) -> Result<PromptCorpus> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    PromptCorpus::parse_jsonl(&text)
}

pub fn load_corpora(paths: &[impl AsRef<Path>]) -> Result<PromptCorpus> {
    let parts = paths
        .iter()
        .map(|p| load_corpus(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    PromptCorpus::merge(parts)
}
