// SPDX-License-Identifier: MIT OR Apache-2.0

//! REALIZED/PAPER label scoring with length normalisation and prior
//! calibration under steering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, PositionMode, Steering};
use crate::corpus::{PromptCorpus, PromptRecord, Role, Task};
use crate::direction::Direction;
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::scale::Scale;
use crate::tables::{self, Provenance, Table};

labeled_enum! {
    Label {
        Paper => "PAPER",
        Realized => "REALIZED",
    }
}

impl From<Role> for Label {
    fn from(role: Role) -> Self {
        match role {
            Role::PaperOpen => Label::Paper,
            Role::RealizedClosed => Label::Realized,
        }
    }
}

pub const CLASSIFICATION_INSTRUCTION: &str =
    "Classify this scenario as REALIZED or PAPER. Answer with one label.";

/// Content-free scenario used for the per-scale calibration prior.
pub const PRIOR_SCENARIO: &str = "Scenario: [none]";

/// Appends the classification instruction exactly once.
pub fn build_classification_prompt(scenario: &str) -> Result<String> {
    if scenario.contains(CLASSIFICATION_INSTRUCTION) {
        return Err(LabError::Invalid(
            "scenario already contains the classification instruction".into(),
        ));
    }
    Ok(format!("{scenario} {CLASSIFICATION_INSTRUCTION}"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub prompt_id: String,
    pub scale: Scale,
    pub label: Label,
    pub raw_logprob_sum: f64,
    pub token_count: usize,
    pub normalized: f64,
    pub calibrated: Option<f64>,
}

impl LabelScore {
    pub fn from_logprobs(prompt_id: &str, scale: Scale, label: Label, logprobs: &[f64]) -> Result<Self> {
        if logprobs.is_empty() {
            return Err(LabError::Invalid(format!("label {label} has no tokens")));
        }
        let raw_logprob_sum: f64 = logprobs.iter().sum();
        Ok(LabelScore {
            prompt_id: prompt_id.to_string(),
            scale,
            label,
            raw_logprob_sum,
            token_count: logprobs.len(),
            normalized: raw_logprob_sum / logprobs.len() as f64,
            calibrated: None,
        })
    }
}

/// Teacher-forced scores for `[PAPER, REALIZED]` appended to `prompt`.
pub fn score_labels(
    backend: &Backend,
    prompt_id: &str,
    prompt: &str,
    steering: Option<&Steering<'_>>,
) -> Result<[LabelScore; 2]> {
    let tok = backend.tokenizer();
    let context = tok.encode_prompt(prompt);
    let scale = steering.map_or(Scale::ZERO, |s| s.scale);
    let score = |label: Label| -> Result<LabelScore> {
        let cont = tok.encode(label.as_str());
        let lp = backend.score_continuation(&context, &cont, steering)?;
        LabelScore::from_logprobs(prompt_id, scale, label, &lp)
    };
    Ok([score(Label::Paper)?, score(Label::Realized)?])
}

/// Calibration priors keyed by `(label, scale)`.
pub type Priors = BTreeMap<(Label, Scale), f64>;

/// Fills `calibrated = normalized − prior` and returns the winning label.
/// Exact ties predict PAPER.
pub fn calibrate(scores: &mut [LabelScore; 2], priors: &Priors) -> Result<Label> {
    for s in scores.iter_mut() {
        let prior = priors
            .get(&(s.label, s.scale))
            .ok_or_else(|| LabError::MissingPrior {
                label: s.label.to_string(),
                scale: s.scale.to_string(),
            })?;
        s.calibrated = Some(s.normalized - prior);
    }
    let value = |l: Label| {
        scores
            .iter()
            .find(|s| s.label == l)
            .and_then(|s| s.calibrated)
            .ok_or_else(|| LabError::Invalid(format!("no score for label {l}")))
    };
    Ok(if value(Label::Realized)? > value(Label::Paper)? {
        Label::Realized
    } else {
        Label::Paper
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub prompt_id: String,
    pub scale: Scale,
    pub normalized_paper: f64,
    pub normalized_realized: f64,
    pub prior_paper: f64,
    pub prior_realized: f64,
    pub prediction: Label,
    pub true_role: Label,
}

impl Prediction {
    pub fn correct(&self) -> bool {
        self.prediction == self.true_role
    }
}

pub const PREDICTION_HEADER: [&str; 8] = [
    "prompt_id",
    "scale",
    "normalized_paper",
    "normalized_realized",
    "prior_paper",
    "prior_realized",
    "prediction",
    "true_role",
];

pub fn predictions_csv(preds: &[Prediction], provenance: Option<&Provenance>) -> Result<Vec<u8>> {
    let rows: Vec<Vec<String>> = preds
        .iter()
        .map(|p| {
            vec![
                p.prompt_id.clone(),
                p.scale.to_string(),
                p.normalized_paper.to_string(),
                p.normalized_realized.to_string(),
                p.prior_paper.to_string(),
                p.prior_realized.to_string(),
                p.prediction.to_string(),
                p.true_role.to_string(),
            ]
        })
        .collect();
    tables::table_bytes(provenance, &PREDICTION_HEADER, &rows)
}

/// Reads a prediction table. A blank `true_role` is resolved from `corpus`
/// when one is given.
pub fn parse_predictions(table: &Table, corpus: Option<&PromptCorpus>) -> Result<Vec<Prediction>> {
    let idx = table.require(&PREDICTION_HEADER)?;
    let mut out = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let bad = |e: LabError| LabError::MalformedLine {
            line: i + 2,
            message: e.to_string(),
        };
        let cell = |k: usize| row.get(idx[k]).map(|s| s.trim()).unwrap_or("");
        let num = |k: usize| tables::parse_f64(cell(k)).map_err(bad);
        let prompt_id = cell(0).to_string();
        let true_role = match (cell(7), corpus) {
            ("", Some(c)) => c
                .get(&prompt_id)
                .map(|r| Label::from(r.role))
                .ok_or_else(|| LabError::UnknownPrompt(prompt_id.clone()))?,
            ("", None) => return Err(LabError::UnknownPrompt(prompt_id)),
            (s, _) => s.parse().map_err(bad)?,
        };
        out.push(Prediction {
            scale: cell(1).parse().map_err(bad)?,
            normalized_paper: num(2)?,
            normalized_realized: num(3)?,
            prior_paper: num(4)?,
            prior_realized: num(5)?,
            prediction: cell(6).parse().map_err(bad)?,
            true_role,
            prompt_id,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyConfig {
    pub layer: usize,
    pub scales: Vec<Scale>,
    pub position_mode: PositionMode,
}

/// Scores every classification prompt at every scale, calibrating against the
/// content-free prior computed under the same hook.
pub fn run_classification(
    backend: &Backend,
    prompts: &[&PromptRecord],
    direction: &Direction,
    config: &ClassifyConfig,
    exec: Exec,
) -> Result<Vec<Prediction>> {
    if config.scales.is_empty() {
        return Err(LabError::Invalid("no classification scales".into()));
    }
    if let Some(p) = prompts.iter().find(|p| p.task != Task::Classification) {
        return Err(LabError::Invalid(format!("prompt {:?} is not a classification prompt", p.id)));
    }
    let texts: Vec<String> = prompts
        .iter()
        .map(|p| build_classification_prompt(&p.text))
        .collect::<Result<_>>()?;
    let prior_text = build_classification_prompt(PRIOR_SCENARIO)?;
    let steer = |s: Scale| Steering::new(direction, config.layer, s, config.position_mode);

    let prior_scores = exec.map(&config.scales, |&s| score_labels(backend, "", &prior_text, Some(&steer(s))));
    let mut priors = Priors::new();
    for scores in prior_scores {
        for s in scores? {
            priors.insert((s.label, s.scale), s.normalized);
        }
    }

    let n_scales = config.scales.len();
    let cells = exec.map_range(prompts.len() * n_scales, |c| {
        let (p, s) = (c / n_scales, config.scales[c % n_scales]);
        score_labels(backend, &prompts[p].id, &texts[p], Some(&steer(s)))
    });

    let mut out = Vec::with_capacity(cells.len());
    for (c, scores) in cells.into_iter().enumerate() {
        let mut scores = scores?;
        let prediction = calibrate(&mut scores, &priors)?;
        let rec = prompts[c / n_scales];
        let scale = scores[0].scale;
        out.push(Prediction {
            prompt_id: rec.id.clone(),
            scale,
            normalized_paper: scores[0].normalized,
            normalized_realized: scores[1].normalized,
            prior_paper: priors[&(Label::Paper, scale)],
            prior_realized: priors[&(Label::Realized, scale)],
            prediction,
            true_role: rec.role.into(),
        });
    }
    out.sort_by(|a, b| (&a.prompt_id, a.scale).cmp(&(&b.prompt_id, b.scale)));
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub total: usize,
}

impl Tally {
    pub fn rate(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub total: usize,
    pub correct: usize,
    pub realized_predictions: usize,
    pub accuracy: f64,
    pub realized_prediction_rate: f64,
    pub per_class: BTreeMap<Label, Tally>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub per_scale: BTreeMap<Scale, ScaleSummary>,
    /// Per-true-class accuracy pooled across scales.
    pub pooled_per_class: BTreeMap<Label, Tally>,
}

pub const REPORT_HEADER: [&str; 9] = [
    "scale",
    "n",
    "accuracy",
    "realized_prediction_rate",
    "realized_predictions",
    "paper_correct",
    "paper_total",
    "realized_correct",
    "realized_total",
];

impl ClassificationReport {
    pub fn rows(&self) -> Vec<Vec<String>> {
        self.per_scale
            .iter()
            .map(|(scale, s)| {
                let t = |l: Label| s.per_class.get(&l).copied().unwrap_or_default();
                vec![
                    scale.to_string(),
                    s.total.to_string(),
                    format!("{:.6}", s.accuracy),
                    format!("{:.6}", s.realized_prediction_rate),
                    s.realized_predictions.to_string(),
                    t(Label::Paper).correct.to_string(),
                    t(Label::Paper).total.to_string(),
                    t(Label::Realized).correct.to_string(),
                    t(Label::Realized).total.to_string(),
                ]
            })
            .collect()
    }

    pub fn to_csv(&self, provenance: Option<&Provenance>) -> Result<Vec<u8>> {
        tables::table_bytes(provenance, &REPORT_HEADER, &self.rows())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn classification_report(predictions: &[Prediction]) -> ClassificationReport {
    let mut report = ClassificationReport::default();
    for p in predictions {
        let s = report.per_scale.entry(p.scale).or_default();
        s.total += 1;
        s.correct += p.correct() as usize;
        s.realized_predictions += (p.prediction == Label::Realized) as usize;
        for tally in [
            s.per_class.entry(p.true_role).or_default(),
            report.pooled_per_class.entry(p.true_role).or_default(),
        ] {
            tally.total += 1;
            tally.correct += p.correct() as usize;
        }
    }
    for s in report.per_scale.values_mut() {
        s.accuracy = s.correct as f64 / s.total as f64;
        s.realized_prediction_rate = s.realized_predictions as f64 / s.total as f64;
    }
    report
}
