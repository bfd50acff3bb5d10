// SPDX-License-Identifier: MIT OR Apache-2.0

//! Declarative end-to-end runs.
//!
//! A run plan is a TOML file. Stages run in dependency order
//! (corpus, activations, direction, readout, sweep, deltas, compliance,
//! bootstrap, classification, projection regression, plots) and every
//! artifact carries the plan hash. Numeric artifacts are a pure function of
//! the plan and its input files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{
    capture_activations, load_activations, save_activations, ActivationSet, Backend,
    BackendConfig, PositionMode, FINAL_POSITION,
};
use crate::behavior::compliance_audit;
use crate::classify::{classification_report, predictions_csv, run_classification, ClassifyConfig};
use crate::corpus::{load_corpora, plant_synthetic_pairs, PromptCorpus, Split, SynthParams, Task};
use crate::direction::{center_within_split, project, readout_eval, train_direction, Direction, ReadoutReport, Variant};
use crate::error::{LabError, Result};
use crate::exec::Exec;
use crate::plots::{emit_plots, PlotKind};
use crate::scale::Scale;
use crate::stats::{
    bootstrap_ci, projection_behavior_regression, Interval, Outcome, PairLevel, Statistic,
};
use crate::steering::{
    matched_deltas, response_rows_csv, run_dose_sweep, DeltaReport, DeltaSubset, ResponseRow,
    SweepConfig, DELTA_HEADER, PER_PROMPT_HEADER,
};
use crate::tables::{self, Provenance, Table};

/// Environment variable naming the root for relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "LAB_OUTPUT_ROOT";

labeled_enum! {
    Analysis {
        Readout => "readout",
        Sweep => "sweep",
        Deltas => "deltas",
        Compliance => "compliance",
        Bootstrap => "bootstrap",
        Classification => "classification",
        ProjectionRegression => "projection_regression",
        Plots => "plots",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_pairs: usize,
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Planted vector dimension when no backend or activation file is given.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_synth_splits")]
    pub splits: Vec<Split>,
}

fn default_gap() -> f64 {
    1.0
}
fn default_dim() -> usize {
    16
}
fn default_synth_splits() -> Vec<Split> {
    vec![Split::DirectionTrain, Split::DirectionVal, Split::BehaviorEval]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionSection {
    #[serde(default = "default_train_split")]
    pub train_split: Split,
    pub layer: usize,
    #[serde(default = "default_variant")]
    pub variant: Variant,
}

fn default_train_split() -> Split {
    Split::DirectionTrain
}
fn default_variant() -> Variant {
    Variant::TrainOnly
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringSection {
    pub scales: Vec<Scale>,
    #[serde(default = "default_mode")]
    pub position_mode: PositionMode,
    #[serde(default = "default_max_new")]
    pub max_new_tokens: usize,
}

fn default_mode() -> PositionMode {
    PositionMode::Final
}
fn default_max_new() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub scales: Vec<Scale>,
    #[serde(default = "default_mode")]
    pub position_mode: PositionMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

fn default_replicates() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPlan {
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub corpus: Vec<PathBuf>,
    pub synth: Option<SynthSection>,
    pub backend: Option<BackendConfig>,
    /// Pre-captured `ACTV` file used instead of capturing from the backend.
    pub activations: Option<PathBuf>,
    pub direction: DirectionSection,
    pub steering: Option<SteeringSection>,
    pub classify: Option<ClassifySection>,
    pub bootstrap: Option<BootstrapSection>,
    /// Defaults to every analysis the plan's sections support, minus
    /// `bootstrap` and `projection_regression`.
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub plots: Vec<PlotKind>,
}

/// Failure of a plan: either it never started or a named stage failed.
#[derive(Debug)]
pub enum PlanError {
    Validation(LabError),
    Stage { stage: &'static str, source: LabError },
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::Validation(e) => write!(f, "plan validation failed: {e}"),
            PlanError::Stage { stage, source } => write!(f, "stage {stage} failed: {source}"),
        }
    }
}

impl std::error::Error for PlanError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            PlanError::Validation(e) | PlanError::Stage { source: e, .. } => Some(e),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PlanError {
    PlanError::Validation(LabError::Invalid(msg.into()))
}

impl RunPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a plan and resolves relative input paths against its directory
    /// and a relative `output_dir` against [`OUTPUT_ROOT_ENV`] when set.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut plan = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in plan.corpus.iter_mut().chain(plan.activations.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if plan.output_dir.is_relative() {
            if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
                plan.output_dir = PathBuf::from(root).join(&plan.output_dir);
            }
        }
        Ok(plan)
    }

    /// Hash of the canonical plan serialisation; output location excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("plan serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn effective_analyses(&self) -> Vec<Analysis> {
        if !self.analyses.is_empty() {
            let mut a = self.analyses.clone();
            a.sort();
            a.dedup();
            return a;
        }
        let mut a = vec![Analysis::Readout];
        if self.steering.is_some() {
            a.extend([Analysis::Sweep, Analysis::Deltas, Analysis::Compliance]);
        }
        if self.classify.is_some() {
            a.push(Analysis::Classification);
        }
        if !self.plots.is_empty() {
            a.push(Analysis::Plots);
        }
        a
    }

    pub fn validate(&self) -> std::result::Result<(), PlanError> {
        if self.corpus.is_empty() && self.synth.is_none() {
            return Err(invalid("plan needs corpus paths or a [synth] section"));
        }
        for p in self.corpus.iter().chain(self.activations.iter()) {
            if !p.is_file() {
                return Err(PlanError::Validation(LabError::io(
                    p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced input does not exist"),
                )));
            }
        }
        if let Some(cfg) = &self.backend {
            cfg.validate().map_err(PlanError::Validation)?;
            if self.direction.layer >= cfg.n_layers {
                return Err(PlanError::Validation(LabError::LayerOutOfRange {
                    layer: self.direction.layer,
                    n_layers: cfg.n_layers,
                }));
            }
        }
        if let Some(s) = &self.steering {
            if !s.scales.contains(&Scale::ZERO) {
                return Err(invalid("steering scales must include 0"));
            }
        }
        let analyses = self.effective_analyses();
        let has = |a: Analysis| analyses.contains(&a);
        let need = |cond: bool, what: &str| if cond { Ok(()) } else { Err(invalid(what.to_string())) };
        if has(Analysis::Sweep) {
            need(self.backend.is_some() && self.steering.is_some(), "sweep needs [backend] and [steering]")?;
        }
        for a in [Analysis::Deltas, Analysis::Compliance, Analysis::Bootstrap, Analysis::ProjectionRegression] {
            if has(a) {
                need(has(Analysis::Sweep), &format!("{a} needs the sweep analysis"))?;
            }
        }
        if has(Analysis::Bootstrap) {
            need(has(Analysis::Deltas), "bootstrap needs the deltas analysis")?;
        }
        if has(Analysis::Classification) {
            need(
                self.backend.is_some() && self.classify.is_some(),
                "classification needs [backend] and [classify]",
            )?;
        }
        if has(Analysis::Plots) {
            need(!self.plots.is_empty(), "plots analysis needs a plots list")?;
            for kind in &self.plots {
                let ok = match kind {
                    PlotKind::Coefficients => has(Analysis::ProjectionRegression),
                    PlotKind::DoseResponse => has(Analysis::Deltas),
                    PlotKind::ProjectionViolin => has(Analysis::Readout),
                    PlotKind::Compliance => has(Analysis::Compliance),
                };
                need(ok, &format!("plot {kind} references an artifact the plan does not produce"))?;
            }
        }
        Ok(())
    }
}

/// Paths of the artifacts a plan run wrote.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub plan_hash: String,
    pub artifacts: Vec<PathBuf>,
}

struct Ctx<'a> {
    plan: &'a RunPlan,
    prov: Provenance,
    out: RunOutput,
    exec: Exec,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.dir.join(name);
        tables::write_bytes(&path, bytes)?;
        self.out.artifacts.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Stamped<'v, T> {
            plan_hash: &'v str,
            version: &'v str,
            report: &'v T,
        }
        let json = serde_json::to_string_pretty(&Stamped {
            plan_hash: &self.prov.plan_hash,
            version: crate::VERSION,
            report: value,
        })?;
        self.write(name, json.as_bytes())
    }

    fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let bytes = tables::table_bytes(Some(&self.prov), header, rows)?;
        self.write(name, &bytes)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, PlanError> {
    r.map_err(|source| PlanError::Stage { stage: name, source })
}

pub fn run_plan(plan: &RunPlan, exec: Exec) -> std::result::Result<RunOutput, PlanError> {
    plan.validate()?;
    let plan_hash = plan.hash();
    let mut ctx = Ctx {
        plan,
        prov: Provenance { plan_hash: plan_hash.clone() },
        out: RunOutput {
            dir: plan.output_dir.clone(),
            plan_hash,
            artifacts: Vec::new(),
        },
        exec,
    };
    let analyses = plan.effective_analyses();
    let has = |a: Analysis| analyses.contains(&a);

    let (corpus, synthetic) = stage("corpus", load_inputs(plan))?;
    stage("corpus", ctx.write("corpus.jsonl", corpus.to_jsonl().as_bytes()))?;

    let backend = match &plan.backend {
        Some(cfg) => Some(stage("backend", Backend::new(cfg.clone()))?),
        None => None,
    };
    let activations = stage("activations", activations_stage(&mut ctx, &corpus, synthetic, backend.as_ref()))?;

    let direction = stage("direction", direction_stage(&mut ctx, &corpus, &activations))?;

    if has(Analysis::Readout) {
        stage("readout", readout_stage(&mut ctx, &corpus, &activations, &direction))?;
    }

    let mut rows = Vec::new();
    if has(Analysis::Sweep) {
        let backend = backend.as_ref().expect("validated");
        rows = stage("sweep", sweep_stage(&mut ctx, backend, &corpus, &direction))?;
    }
    let mut deltas = Vec::new();
    if has(Analysis::Deltas) {
        deltas = stage("deltas", deltas_stage(&mut ctx, &rows))?;
    }
    if has(Analysis::Compliance) {
        let report = stage("compliance", compliance_audit(&rows, &corpus))?;
        stage("compliance", report.to_csv(Some(&ctx.prov)).and_then(|b| ctx.write("compliance.csv", &b)))?;
    }
    if has(Analysis::Bootstrap) {
        stage("bootstrap", bootstrap_stage(&mut ctx, &deltas))?;
    }
    if has(Analysis::Classification) {
        let backend = backend.as_ref().expect("validated");
        stage("classification", classification_stage(&mut ctx, backend, &corpus, &direction))?;
    }
    if has(Analysis::ProjectionRegression) {
        stage("projection_regression", projection_stage(&mut ctx, &corpus, &activations, &direction, &rows))?;
    }
    if has(Analysis::Plots) {
        let written = stage("plots", emit_plots(&ctx.out.dir, &plan.plots, Some(&ctx.prov)))?;
        ctx.out.artifacts.extend(written);
    }
    Ok(ctx.out)
}

fn load_inputs(plan: &RunPlan) -> Result<(PromptCorpus, Option<ActivationSet>)> {
    let mut parts = Vec::new();
    if !plan.corpus.is_empty() {
        parts.push(load_corpora(&plan.corpus)?);
    }
    let mut synthetic = None;
    if let Some(s) = &plan.synth {
        let dim = plan.backend.as_ref().map_or(s.dim, |b| b.d_model);
        let mut params = SynthParams::new(dim, s.n_pairs, s.gap, s.noise_sigma, plan.seed);
        params.splits = s.splits.clone();
        let synth = plant_synthetic_pairs(&params)?;
        parts.push(synth.corpus);
        synthetic = Some(synth.activations);
    }
    Ok((PromptCorpus::merge(parts)?, synthetic))
}

fn activations_stage(
    ctx: &mut Ctx<'_>,
    corpus: &PromptCorpus,
    synthetic: Option<ActivationSet>,
    backend: Option<&Backend>,
) -> Result<ActivationSet> {
    let plan = ctx.plan;
    if let Some(path) = &plan.activations {
        return load_activations(path);
    }
    match backend {
        Some(backend) => {
            let prompts: Vec<_> = corpus.records().iter().collect();
            let out = capture_activations(backend, &prompts, &[plan.direction.layer], PositionMode::Final, ctx.exec)?;
            let mut manifest = out.manifest;
            manifest.plan_hash = Some(ctx.prov.plan_hash.clone());
            let mut acts = out.activations;
            acts.producer = format!("{};plan_hash={}", acts.producer, ctx.prov.plan_hash);
            let path = ctx.out.dir.join("activations.actv");
            save_activations(&path, &acts)?;
            ctx.out.artifacts.push(path);
            ctx.write_json("capture_manifest.json", &manifest)?;
            Ok(acts)
        }
        None => synthetic.ok_or_else(|| LabError::Invalid("no activation source".into())),
    }
}

fn direction_stage(ctx: &mut Ctx<'_>, corpus: &PromptCorpus, acts: &ActivationSet) -> Result<Direction> {
    let d = &ctx.plan.direction;
    let pairs = match d.variant {
        Variant::TrainOnly => corpus.pair_index(d.train_split),
        Variant::AllPairs => corpus.all_pairs(),
    };
    let mut direction = train_direction(acts, &pairs, d.layer, d.variant)?;
    direction.plan_hash = Some(ctx.prov.plan_hash.clone());
    ctx.write("direction.json", direction.to_json().as_bytes())?;
    Ok(direction)
}

pub const READOUT_HEADER: [&str; 6] = [
    "split",
    "n_pairs",
    "mean_projection_delta",
    "correct_direction_rate",
    "correct_count",
    "ties",
];

pub const PROJECTION_HEADER: [&str; 5] = ["prompt_id", "split", "role", "projection", "centered"];

fn readout_stage(
    ctx: &mut Ctx<'_>,
    corpus: &PromptCorpus,
    acts: &ActivationSet,
    direction: &Direction,
) -> Result<()> {
    let mut reports: Vec<ReadoutReport> = Vec::new();
    for split in Split::ALL {
        let pairs = corpus.pair_index(*split);
        if !pairs.is_empty() {
            reports.push(readout_eval(direction, acts, &pairs)?);
        }
    }
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.split.clone(),
                r.n_pairs.to_string(),
                r.mean_projection_delta.to_string(),
                r.correct_direction_rate.to_string(),
                r.correct_count.to_string(),
                r.ties.to_string(),
            ]
        })
        .collect();
    ctx.write_table("readout.csv", &READOUT_HEADER, &rows)?;
    ctx.write_json("readout.json", &reports)?;

    // per-prompt projections of paired prompts, centred within split for plots
    let mut by_split: BTreeMap<String, Vec<(String, String, f64)>> = BTreeMap::new();
    for split in Split::ALL {
        for pair in corpus.pair_index(*split) {
            for id in [&pair.paper_prompt_id, &pair.realized_prompt_id] {
                let v = acts.require(id, direction.layer, FINAL_POSITION)?;
                let role = corpus.get(id).map(|r| r.role.to_string()).unwrap_or_default();
                by_split
                    .entry(split.to_string())
                    .or_default()
                    .push((id.clone(), role, project(v, direction)?));
            }
        }
    }
    let raw: BTreeMap<String, Vec<f64>> = by_split
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().map(|x| x.2).collect()))
        .collect();
    let centered = center_within_split(&raw)?;
    let mut rows = Vec::new();
    for (split, items) in &by_split {
        for ((id, role, p), c) in items.iter().zip(&centered[split]) {
            rows.push(vec![id.clone(), split.clone(), role.clone(), p.to_string(), c.to_string()]);
        }
    }
    ctx.write_table("projections.csv", &PROJECTION_HEADER, &rows)
}

fn sweep_stage(
    ctx: &mut Ctx<'_>,
    backend: &Backend,
    corpus: &PromptCorpus,
    direction: &Direction,
) -> Result<Vec<ResponseRow>> {
    let s = ctx.plan.steering.as_ref().expect("validated");
    let config = SweepConfig {
        layer: ctx.plan.direction.layer,
        scales: s.scales.clone(),
        position_mode: s.position_mode,
        max_new_tokens: s.max_new_tokens,
    };
    let prompts = corpus.behavior_prompts(Task::WagerRisk);
    let mut out = run_dose_sweep(backend, &prompts, direction, &config, ctx.exec)?;
    out.manifest.plan_hash = Some(ctx.prov.plan_hash.clone());
    let reference = out.manifest.reference();
    for r in out.rows.iter_mut().chain(out.hook_free.iter_mut()) {
        r.manifest_ref = Some(reference.clone());
    }
    let bytes = response_rows_csv(&out.rows, Some(&ctx.prov))?;
    ctx.write("responses.csv", &bytes)?;
    let bytes = response_rows_csv(&out.hook_free, Some(&ctx.prov))?;
    ctx.write("responses_hook_free.csv", &bytes)?;
    ctx.write_json("sweep_manifest.json", &out.manifest)?;
    Ok(out.rows)
}

fn deltas_stage(ctx: &mut Ctx<'_>, rows: &[ResponseRow]) -> Result<Vec<DeltaReport>> {
    let mut reports = Vec::new();
    for scale in crate::steering::steered_scales(rows) {
        for subset in DeltaSubset::ALL {
            reports.push(matched_deltas(rows, scale, *subset)?);
        }
    }
    let summary: Vec<Vec<String>> = reports.iter().map(DeltaReport::summary_cells).collect();
    ctx.write_table("deltas.csv", &DELTA_HEADER, &summary)?;
    let per_prompt: Vec<Vec<String>> = reports.iter().flat_map(DeltaReport::per_prompt_cells).collect();
    ctx.write_table("deltas_per_prompt.csv", &PER_PROMPT_HEADER, &per_prompt)?;
    Ok(reports)
}

pub const BOOTSTRAP_HEADER: [&str; 8] = [
    "scale", "subset", "quantity", "statistic", "estimate", "low95", "high95", "replicates",
];

fn bootstrap_stage(ctx: &mut Ctx<'_>, reports: &[DeltaReport]) -> Result<()> {
    let replicates = ctx.plan.bootstrap.as_ref().map_or(default_replicates(), |b| b.replicates);
    let mut rows = Vec::new();
    for r in reports {
        let quantities: [(&str, Vec<f64>); 2] = [
            ("wager", r.per_prompt.iter().map(|d| d.wager_delta as f64).collect()),
            ("risk", r.per_prompt.iter().map(|d| d.risk_delta as f64).collect()),
        ];
        for (name, values) in &quantities {
            for stat in Statistic::ALL {
                let ci: Option<Interval> = if values.is_empty() {
                    None
                } else {
                    Some(bootstrap_ci(values, *stat, replicates, ctx.plan.seed, ctx.exec)?)
                };
                let c = |f: fn(&Interval) -> f64| ci.as_ref().map(|i| f(i).to_string()).unwrap_or_default();
                rows.push(vec![
                    r.scale.to_string(),
                    r.subset.to_string(),
                    name.to_string(),
                    stat.to_string(),
                    c(|i| i.estimate),
                    c(|i| i.low),
                    c(|i| i.high),
                    replicates.to_string(),
                ]);
            }
        }
    }
    ctx.write_table("bootstrap.csv", &BOOTSTRAP_HEADER, &rows)
}

fn classification_stage(
    ctx: &mut Ctx<'_>,
    backend: &Backend,
    corpus: &PromptCorpus,
    direction: &Direction,
) -> Result<()> {
    let c = ctx.plan.classify.as_ref().expect("validated");
    let config = ClassifyConfig {
        layer: ctx.plan.direction.layer,
        scales: c.scales.clone(),
        position_mode: c.position_mode,
    };
    let prompts = corpus.behavior_prompts(Task::Classification);
    let preds = run_classification(backend, &prompts, direction, &config, ctx.exec)?;
    let bytes = predictions_csv(&preds, Some(&ctx.prov))?;
    ctx.write("predictions.csv", &bytes)?;
    let report = classification_report(&preds);
    let bytes = report.to_csv(Some(&ctx.prov))?;
    ctx.write("classification.csv", &bytes)?;
    ctx.write_json("classification.json", &report)
}

pub const PAIR_TABLE_HEADER: [&str; 7] = [
    "pair_id", "pair_role", "domain", "prompt_source", "projection", "wager", "risk_profile",
];

/// Per-prompt table joining baseline behavior with final-token projection.
pub fn pair_table(
    corpus: &PromptCorpus,
    acts: &ActivationSet,
    direction: &Direction,
    rows: &[ResponseRow],
) -> Result<Table> {
    let baseline: BTreeMap<&str, &ResponseRow> = rows
        .iter()
        .filter(|r| r.scale.is_zero())
        .map(|r| (r.prompt_id.as_str(), r))
        .collect();
    let mut out = Vec::new();
    for rec in corpus.behavior_prompts(Task::WagerRisk) {
        let Some(row) = baseline.get(rec.id.as_str()) else { continue };
        let v = acts.require(&rec.id, direction.layer, FINAL_POSITION)?;
        out.push(vec![
            rec.pair_id.clone(),
            rec.role.to_string(),
            rec.domain.to_string(),
            rec.source.clone(),
            project(v, direction)?.to_string(),
            tables::opt_cell(row.parsed.valid_wager()),
            tables::opt_cell(row.parsed.valid_risk()),
        ]);
    }
    Ok(Table {
        header: PAIR_TABLE_HEADER.iter().map(|s| s.to_string()).collect(),
        rows: out,
    })
}

fn projection_stage(
    ctx: &mut Ctx<'_>,
    corpus: &PromptCorpus,
    acts: &ActivationSet,
    direction: &Direction,
    rows: &[ResponseRow],
) -> Result<()> {
    let table = pair_table(corpus, acts, direction, rows)?;
    ctx.write_table("pair_table.csv", &PAIR_TABLE_HEADER, &table.rows)?;
    let raw = projection_behavior_regression(&table, PairLevel::RawPrompt, Outcome::Wager, false)?;
    let bytes = raw.to_csv(Some(&ctx.prov))?;
    ctx.write("coefficients_projection_raw.csv", &bytes)?;
    let within = projection_behavior_regression(&table, PairLevel::WithinPair, Outcome::WagerDelta, false)?;
    let bytes = within.to_csv(Some(&ctx.prov))?;
    ctx.write("coefficients_projection_within.csv", &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        seed = 3
        output_dir = "out"
        [synth]
        n_pairs = 4
        [direction]
        layer = 0
    "#;

    #[test]
    fn parse_and_defaults() {
        let plan = RunPlan::from_toml(MINIMAL).unwrap();
        assert_eq!(plan.direction.variant, Variant::TrainOnly);
        assert_eq!(plan.effective_analyses(), vec![Analysis::Readout]);
        plan.validate().unwrap();
        assert!(RunPlan::from_toml("seed = 1\noutput_dir = 'x'\nbogus = 2\n[direction]\nlayer = 0").is_err());
    }

    #[test]
    fn validation_rules() {
        let mut plan = RunPlan::from_toml(MINIMAL).unwrap();
        plan.corpus = vec![PathBuf::from("/definitely/not/here.jsonl")];
        assert!(matches!(plan.validate(), Err(PlanError::Validation(_))));

        let mut plan = RunPlan::from_toml(MINIMAL).unwrap();
        plan.analyses = vec![Analysis::Sweep];
        assert!(plan.validate().is_err());
        plan.backend = Some(BackendConfig::default());
        plan.steering = Some(SteeringSection {
            scales: vec![Scale::new(50.0).unwrap()],
            position_mode: PositionMode::Final,
            max_new_tokens: 4,
        });
        assert!(plan.validate().is_err());
        plan.steering.as_mut().unwrap().scales.push(Scale::ZERO);
        plan.validate().unwrap();
        plan.analyses.push(Analysis::Bootstrap);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunPlan::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }
}
