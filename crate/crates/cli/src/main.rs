// SPDX-License-Identifier: MIT OR Apache-2.0

//! `lab`: command-line driver for steering and readout experiments.
//!
//! Exit codes: 0 on success, 2 on validation errors (bad arguments or
//! malformed inputs), 3 when a computation stage fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steerlab::backend::{
    capture_activations, load_activations, save_activations, Backend, BackendConfig, PositionMode,
    Steering,
};
use steerlab::behavior::compliance_audit;
use steerlab::classify::{
    classification_report, parse_predictions, predictions_csv, run_classification, ClassifyConfig,
};
use steerlab::corpus::{load_corpora, plant_synthetic_pairs, Split, SynthParams, Task};
use steerlab::direction::{readout_eval, train_direction, Direction, Variant};
use steerlab::plan::{run_plan, PlanError, RunPlan};
use steerlab::plots::{emit_plots, PlotKind};
use steerlab::scale::parse_scale_list;
use steerlab::stats::{
    bootstrap_ci, fit_ols_hc3, projection_behavior_regression, Outcome, PairLevel, RegressionSpec,
    Statistic,
};
use steerlab::steering::{
    matched_deltas, parse_response_rows, response_rows_csv, run_dose_sweep, DeltaSubset,
    ResponseRow, SweepConfig, DELTA_HEADER, PER_PROMPT_HEADER,
};
use steerlab::tables::{self, parse_f64, read_table, write_bytes, write_table};
use steerlab::{Exec, LabError, Scale};

#[derive(Parser)]
#[command(name = "lab", version, about = "Residual-stream readout and steering laboratory")]
struct Cli {
    /// Run every data-parallel stage on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate or generate prompt corpora.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Capture activations or generate text with the toy backend.
    #[command(subcommand)]
    Backend(BackendCmd),
    /// Train and evaluate mean-difference directions.
    #[command(subcommand)]
    Direction(DirectionCmd),
    /// Dose-response sweeps and matched deltas.
    #[command(subcommand)]
    Steer(SteerCmd),
    /// Parse responses and audit compliance.
    #[command(subcommand)]
    Behavior(BehaviorCmd),
    /// Regressions and intervals.
    #[command(subcommand)]
    Stats(StatsCmd),
    /// Label-scoring classification control.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// Execute a TOML run plan end to end.
    Run {
        plan: PathBuf,
    },
    /// Render plots from the tables in an artifact directory.
    Report {
        dir: PathBuf,
        /// Comma-separated plot kinds.
        #[arg(long, value_delimiter = ',', default_value = "dose_response,projection_violin,compliance")]
        plots: Vec<PlotKind>,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Load and validate JSONL corpora; prints a summary.
    Validate {
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
    },
    /// Generate a planted-signal corpus with its activations.
    Synth {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n_pairs: usize,
        #[arg(long, default_value_t = 1.0)]
        gap: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated splits.
        #[arg(long, value_delimiter = ',', default_value = "direction_train,direction_val")]
        splits: Vec<Split>,
        #[arg(long)]
        out_corpus: PathBuf,
        #[arg(long)]
        out_activations: PathBuf,
        /// Optional JSON file receiving the planted unit vector.
        #[arg(long)]
        out_planted: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// TOML or JSON backend configuration; defaults when omitted.
    #[arg(long)]
    backend_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BackendCmd {
    /// Capture final-position (or all-position) residuals for every prompt.
    Capture {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        #[arg(long, default_value = "final")]
        position_mode: PositionMode,
        #[arg(long)]
        out: PathBuf,
        /// Run manifest path; defaults to `<out>.manifest.json`.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Greedy generation for one prompt, printed as JSON.
    Run {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        text: String,
        #[arg(long, default_value_t = 16)]
        max_new_tokens: usize,
        #[arg(long)]
        direction: Option<PathBuf>,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        scale: Scale,
        #[arg(long, default_value = "final")]
        position_mode: PositionMode,
    },
}

#[derive(Subcommand)]
enum DirectionCmd {
    Train {
        #[arg(long)]
        activations: PathBuf,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long, default_value = "direction_train")]
        split: Split,
        #[arg(long)]
        layer: usize,
        #[arg(long, default_value = "train_only")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    Eval {
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        activations: PathBuf,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SteerCmd {
    Sweep {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        direction: PathBuf,
        /// Defaults to the direction's layer.
        #[arg(long)]
        layer: Option<usize>,
        /// Comma-separated, must include 0.
        #[arg(long, allow_hyphen_values = true)]
        scales: String,
        #[arg(long, default_value = "final")]
        position_mode: PositionMode,
        #[arg(long, default_value_t = 8)]
        max_new_tokens: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hook_free_out: Option<PathBuf>,
    },
    Deltas {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        scale: Scale,
        #[arg(long, default_value = "all_valid")]
        subset: DeltaSubset,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        per_prompt: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum BehaviorCmd {
    /// Adds parsed columns to a table with prompt_id, scale, raw_text.
    Parse {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Audit {
        #[arg(long)]
        rows: PathBuf,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Subcommand)]
enum StatsCmd {
    /// OLS with HC3 covariance from a TOML regression spec.
    Fit {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projection-behavior regression on a pair table.
    PairAnalysis {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        level: PairLevel,
        /// Defaults to `wager` (raw level) or `wager_delta` (within pair).
        #[arg(long)]
        outcome: Option<Outcome>,
        #[arg(long)]
        controls: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Percentile bootstrap interval over one column of a table.
    Bootstrap {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        column: String,
        #[arg(long, default_value = "mean")]
        statistic: Statistic,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ClassifyCmd {
    Run {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long = "corpus", required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        scales: String,
        #[arg(long, default_value = "final")]
        position_mode: PositionMode,
        #[arg(long)]
        out: PathBuf,
    },
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resolves blank true_role cells.
        #[arg(long = "corpus", num_args = 1..)]
        corpus: Vec<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Stage(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Stage(e.to_string())
        }
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Validation(_) => Failure::Validation(e.to_string()),
            PlanError::Stage { .. } => Failure::Stage(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn load_backend(args: &BackendArgs) -> Result<Backend, Failure> {
    let config = match &args.backend_config {
        None => BackendConfig::default(),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| LabError::Io { path: path.clone(), source: e })?;
            if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text).map_err(LabError::from)?
            } else {
                BackendConfig::from_toml(&text)?
            }
        }
    };
    Ok(Backend::new(config)?)
}

fn scales(s: &str) -> Result<Vec<Scale>, Failure> {
    Ok(parse_scale_list(s)?)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let json = serde_json::to_string_pretty(value).map_err(LabError::from)?;
    Ok(write_bytes(path, json.as_bytes())?)
}

fn run(cli: Cli) -> CliResult {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Corpus(CorpusCmd::Validate { corpus }) => {
            let c = load_corpora(&corpus)?;
            println!("{} records, {} pairs", c.len(), c.n_pairs());
            for split in Split::ALL {
                let n = c.pair_index(*split).len();
                if n > 0 {
                    println!("  {split}: {n} pairs");
                }
            }
        }
        Command::Corpus(CorpusCmd::Synth { dim, n_pairs, gap, noise, seed, splits, out_corpus, out_activations, out_planted }) => {
            let mut params = SynthParams::new(dim, n_pairs, gap, noise, seed);
            params.splits = splits;
            let s = plant_synthetic_pairs(&params)?;
            write_bytes(&out_corpus, s.corpus.to_jsonl().as_bytes())?;
            save_activations(&out_activations, &s.activations)?;
            if let Some(p) = out_planted {
                write_json(&p, &s.planted)?;
            }
        }
        Command::Backend(BackendCmd::Capture { backend, corpus, layers, position_mode, out, manifest }) => {
            let backend = load_backend(&backend)?;
            let c = load_corpora(&corpus)?;
            let prompts: Vec<_> = c.records().iter().collect();
            let result = capture_activations(&backend, &prompts, &layers, position_mode, exec)?;
            save_activations(&out, &result.activations)?;
            let manifest = manifest.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".manifest.json");
                PathBuf::from(p)
            });
            write_json(&manifest, &result.manifest)?;
            for f in &result.manifest.failed_prompts {
                eprintln!("failed: {} ({})", f.prompt_id, f.reason);
            }
        }
        Command::Backend(BackendCmd::Run { backend, text, max_new_tokens, direction, layer, scale, position_mode }) => {
            let backend = load_backend(&backend)?;
            let direction = direction.map(|p| Direction::load(&p)).transpose()?;
            let steering = direction
                .as_ref()
                .map(|d| Steering::new(d, layer.unwrap_or(d.layer), scale, position_mode));
            let result = backend.run_text("cli", &text, steering.as_ref(), None, max_new_tokens)?;
            println!("{}", serde_json::to_string_pretty(&result).map_err(LabError::from)?);
        }
        Command::Direction(DirectionCmd::Train { activations, corpus, split, layer, variant, out }) => {
            let acts = load_activations(&activations)?;
            let c = load_corpora(&corpus)?;
            let pairs = match variant {
                Variant::TrainOnly => c.pair_index(split),
                Variant::AllPairs => c.all_pairs(),
            };
            let d = train_direction(&acts, &pairs, layer, variant)?;
            d.save(&out)?;
            println!("direction {} (raw norm {:.6})", d.id(), d.raw_norm);
        }
        Command::Direction(DirectionCmd::Eval { direction, activations, corpus, split, out }) => {
            let d = Direction::load(&direction)?;
            let acts = load_activations(&activations)?;
            let c = load_corpora(&corpus)?;
            let report = readout_eval(&d, &acts, &c.pair_index(split))?;
            write_bytes(&out, report.to_json().as_bytes())?;
            println!("{split}: {}", report.table_row());
        }
        Command::Steer(SteerCmd::Sweep { backend, corpus, direction, layer, scales: s, position_mode, max_new_tokens, out, hook_free_out }) => {
            let backend = load_backend(&backend)?;
            let c = load_corpora(&corpus)?;
            let d = Direction::load(&direction)?;
            let config = SweepConfig {
                layer: layer.unwrap_or(d.layer),
                scales: scales(&s)?,
                position_mode,
                max_new_tokens,
            };
            let prompts = c.behavior_prompts(Task::WagerRisk);
            let result = run_dose_sweep(&backend, &prompts, &d, &config, exec)?;
            write_bytes(&out, &response_rows_csv(&result.rows, None)?)?;
            if let Some(p) = hook_free_out {
                write_bytes(&p, &response_rows_csv(&result.hook_free, None)?)?;
            }
            let mut manifest = out.clone().into_os_string();
            manifest.push(".manifest.json");
            write_json(Path::new(&manifest), &result.manifest)?;
        }
        Command::Steer(SteerCmd::Deltas { rows, scale, subset, report, per_prompt }) => {
            let rows = parse_response_rows(&read_table(&rows)?)?;
            let r = matched_deltas(&rows, scale, subset)?;
            write_table(&report, None, &DELTA_HEADER, &[r.summary_cells()])?;
            if let Some(p) = per_prompt {
                write_table(&p, None, &PER_PROMPT_HEADER, &r.per_prompt_cells())?;
            }
            println!("{}", r.table_row());
        }
        Command::Behavior(BehaviorCmd::Parse { input, out }) => {
            let t = read_table(&input)?;
            let idx = t.require(&["prompt_id", "scale", "raw_text"])?;
            let failure = t.column("failure_flag");
            let mut rows = Vec::with_capacity(t.rows.len());
            for (i, r) in t.rows.iter().enumerate() {
                let scale: Scale = r[idx[1]].parse().map_err(|e: LabError| LabError::MalformedLine {
                    line: i + 2,
                    message: e.to_string(),
                })?;
                let mut row = ResponseRow::from_text(&r[idx[0]], scale, &r[idx[2]]);
                if let Some(f) = failure {
                    row.failure = tables::parse_bool(&r[f])?;
                }
                rows.push(row);
            }
            write_bytes(&out, &response_rows_csv(&rows, None)?)?;
        }
        Command::Behavior(BehaviorCmd::Audit { rows, corpus, report }) => {
            let rows = parse_response_rows(&read_table(&rows)?)?;
            let c = load_corpora(&corpus)?;
            let r = compliance_audit(&rows, &c)?;
            write_bytes(&report, &r.to_csv(None)?)?;
        }
        Command::Stats(StatsCmd::Fit { spec, data, out }) => {
            let text = fs::read_to_string(&spec).map_err(|e| LabError::Io { path: spec.clone(), source: e })?;
            let spec = RegressionSpec::from_toml(&text)?;
            let fit = fit_ols_hc3(&spec, &read_table(&data)?)?;
            write_bytes(&out, &fit.to_csv(None)?)?;
            println!("n = {}, r2 = {}", fit.n, fit.r_squared.map_or("NA".into(), |r| format!("{r:.4}")));
        }
        Command::Stats(StatsCmd::PairAnalysis { pairs, level, outcome, controls, out }) => {
            let outcome = outcome.unwrap_or(match level {
                PairLevel::RawPrompt => Outcome::Wager,
                PairLevel::WithinPair => Outcome::WagerDelta,
            });
            let fit = projection_behavior_regression(&read_table(&pairs)?, level, outcome, controls)?;
            write_bytes(&out, &fit.to_csv(None)?)?;
        }
        Command::Stats(StatsCmd::Bootstrap { data, column, statistic, replicates, seed }) => {
            let t = read_table(&data)?;
            let c = t.require(&[column.as_str()])?[0];
            let values: Vec<f64> = t
                .rows
                .iter()
                .filter(|r| !r[c].trim().is_empty())
                .map(|r| parse_f64(&r[c]))
                .collect::<Result<_, _>>()?;
            let ci = bootstrap_ci(&values, statistic, replicates, seed, exec)?;
            println!("{}", serde_json::to_string(&ci).map_err(LabError::from)?);
        }
        Command::Classify(ClassifyCmd::Run { backend, corpus, direction, layer, scales: s, position_mode, out }) => {
            let backend = load_backend(&backend)?;
            let c = load_corpora(&corpus)?;
            let d = Direction::load(&direction)?;
            let config = ClassifyConfig {
                layer: layer.unwrap_or(d.layer),
                scales: scales(&s)?,
                position_mode,
            };
            let prompts = c.behavior_prompts(Task::Classification);
            let preds = run_classification(&backend, &prompts, &d, &config, exec)?;
            write_bytes(&out, &predictions_csv(&preds, None)?)?;
        }
        Command::Classify(ClassifyCmd::Report { input, out, corpus }) => {
            let c = if corpus.is_empty() { None } else { Some(load_corpora(&corpus)?) };
            let preds = parse_predictions(&read_table(&input)?, c.as_ref())?;
            let report = classification_report(&preds);
            write_bytes(&out, &report.to_csv(None)?)?;
            for (scale, s) in &report.per_scale {
                println!(
                    "scale {scale}: accuracy {}/{} ({:.3}), realized rate {}/{} ({:.3})",
                    s.correct, s.total, s.accuracy, s.realized_predictions, s.total, s.realized_prediction_rate
                );
            }
        }
        Command::Run { plan } => {
            let plan = RunPlan::load(&plan).map_err(|e| Failure::Validation(e.to_string()))?;
            let out = run_plan(&plan, exec)?;
            println!("plan {} -> {}", out.plan_hash, out.dir.display());
            for a in &out.artifacts {
                println!("  {}", a.display());
            }
        }
        Command::Report { dir, plots } => {
            for p in emit_plots(&dir, &plots, None)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
