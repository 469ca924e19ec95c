//! Command-line entry point.
//!
//! Every subcommand writes a `<output>.manifest.json` recording the flags,
//! seed and SHA-256 digests of its inputs and outputs. Exit status is 0 on
//! success, 1 for usage and input errors and 2 for internal failures.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::action::Action;
use crate::dom::prepare_tree;
use crate::eval::aggregate;
use crate::manifest::RunManifest;
use crate::pairgen::{build_dataset, read_dataset, write_dataset, BuildOptions, PromptTemplate};
use crate::policy::{self, DpoConfig, Objective, PairExample, PolicyTable};
use crate::pruner::{lexical_scores, load_scores, prune_to_k, PruneConfig, PruneMode};
use crate::sampler::{build_negative_actions, SampleConfig, Strategy, DEFAULT_REPLACE_THRESHOLD};
use crate::stats::{check_click_ratio, compute_stats, histograms_csv};

/// Environment variable that replaces `--seed` when set.
pub const SEED_ENV: &str = "WEPO_SEED";

#[derive(Debug, Parser)]
#[command(name = "wepo", version, about = "Build and check web-action preference-pair datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean raw HTML and mark candidate elements.
    Clean(CleanArgs),
    /// Prune a page to its top-k candidate snippets.
    Prune(PruneArgs),
    /// Draw negative actions for one labeled page.
    Sample(SampleArgs),
    /// Build a preference-pair dataset from a step corpus.
    Build(BuildArgs),
    /// Train the toy policy on a pair dataset.
    TrainToy(TrainArgs),
    /// Score predictions against a step corpus.
    Eval(EvalArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyArg {
    Distance,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Distance => Strategy::Distance,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Training,
    Inference,
}

impl From<ModeArg> for PruneMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Training => PruneMode::Training,
            ModeArg::Inference => PruneMode::Inference,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveArg {
    Dpo,
    Sft,
}

#[derive(Debug, Args, Serialize)]
pub struct CleanArgs {
    /// Raw HTML file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PruneFlags {
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 60)]
    pub max_descendants: usize,
    #[arg(long, default_value_t = 5)]
    pub max_depth_up: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Training)]
    pub mode: ModeArg,
}

impl PruneFlags {
    fn config(&self) -> PruneConfig {
        PruneConfig {
            k: self.k,
            max_descendants: self.max_descendants,
            max_depth_up: self.max_depth_up,
            mode: self.mode.into(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    /// Raw HTML file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
    /// Candidate score file (`candidate_id<TAB>score` lines).
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Intent for the fallback lexical scorer when no scores are given.
    #[arg(long, default_value = "")]
    pub intent: String,
    /// Ground-truth candidate id, kept in training mode.
    #[arg(long)]
    pub truth: Option<u32>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleFlags {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = StrategyArg::Distance)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = DEFAULT_REPLACE_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SampleFlags {
    fn config(&self, seed: u64) -> SampleConfig {
        SampleConfig {
            n: self.n,
            strategy: self.strategy.into(),
            replace_threshold: self.threshold,
            seed,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    /// Page HTML; candidates are marked as for `clean`.
    #[arg(long)]
    pub input: PathBuf,
    /// Ground-truth action, e.g. `TYPE [3] [Boston]`.
    #[arg(long)]
    pub truth: String,
    /// JSONL of negative actions.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sample: SampleFlags,
    /// Also write a TSV trace of rank, element, distance and action.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    /// Step corpus (JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pair dataset (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub prune: PruneFlags,
    #[command(flatten)]
    pub sample: SampleFlags,
    /// Directory of `<step_digest>.tsv` candidate score files.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Pair dataset (JSONL).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Dpo)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0.95)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = policy::DEFAULT_FEATURE_DIM)]
    pub feature_dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Predictions (JSONL of `{"step_digest", "action_string"}`).
    #[arg(long)]
    pub preds: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics report (JSON).
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Statistics report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Histogram CSV for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// A failed run and its exit status.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(e) => write!(f, "error: {e:#}"),
            Failure::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn internal(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn internal(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Internal(e.into()))
    }
}

/// `WEPO_SEED` when set and valid, else `flag`.
pub fn effective_seed(flag: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            .input(),
        Err(_) => Ok(flag),
    }
}

fn snapshot(args: &impl Serialize) -> Result<serde_json::Value, Failure> {
    serde_json::to_value(args).internal()
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .internal()
}

fn finish(mut m: RunManifest, inputs: &[&Path], outputs: &[&Path]) -> Result<(), Failure> {
    for p in inputs {
        m.add_input(p).with_context(|| format!("hashing {}", p.display())).input()?;
    }
    for p in outputs {
        m.add_output(p).with_context(|| format!("hashing {}", p.display())).internal()?;
    }
    m.write_beside(outputs[0]).context("writing manifest").internal()?;
    Ok(())
}

fn read_html(path: &Path) -> Result<crate::dom::DomTree, Failure> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .input()?;
    prepare_tree(&raw).with_context(|| format!("parsing {}", path.display())).input()
}

fn run_clean(a: &CleanArgs) -> Result<(), Failure> {
    let tree = read_html(&a.input)?;
    write_file(&a.out, &(tree.serialize() + "\n"))?;
    finish(RunManifest::new("clean", snapshot(a)?, None), &[&a.input], &[&a.out])
}

fn run_prune(a: &PruneArgs) -> Result<(), Failure> {
    let cfg = a.prune.config();
    cfg.validate().input()?;
    let tree = read_html(&a.input)?;
    let scores = match &a.scores {
        Some(p) => load_scores(p).input()?,
        None => lexical_scores(&tree, &a.intent),
    };
    let pruned = prune_to_k(&tree, &scores, a.truth, &cfg).input()?;
    write_file(&a.out, &(pruned.serialize() + "\n"))?;
    let mut inputs = vec![a.input.as_path()];
    inputs.extend(a.scores.as_deref());
    finish(RunManifest::new("prune", snapshot(a)?, None), &inputs, &[&a.out])
}

fn run_sample(a: &SampleArgs) -> Result<(), Failure> {
    let seed = effective_seed(a.sample.seed)?;
    let cfg = a.sample.config(seed);
    let tree = read_html(&a.input)?;
    let truth: Action = a.truth.parse().context("--truth").input()?;
    let negatives = build_negative_actions(&tree, &truth, &cfg).input()?;
    let mut out = String::new();
    let mut trace = String::from("rank\telement\tdistance\taction\n");
    for n in &negatives {
        let line = serde_json::json!({
            "action": n.action.to_string(),
            "rank": n.rank,
            "distance": n.distance,
        });
        let _ = writeln!(out, "{line}");
        let _ = writeln!(trace, "{}\t{}\t{}\t{}", n.rank, n.action.element(), n.distance, n.action);
    }
    write_file(&a.out, &out)?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(t) = &a.trace {
        write_file(t, &trace)?;
        outputs.push(t);
    }
    finish(RunManifest::new("sample", snapshot(a)?, Some(seed)), &[&a.input], &outputs)
}

fn run_build(a: &BuildArgs) -> Result<(), Failure> {
    let seed = effective_seed(a.sample.seed)?;
    let opts = BuildOptions {
        prune: a.prune.config(),
        sample: a.sample.config(seed),
        template: PromptTemplate::default(),
        threads: a.threads,
        scores_dir: a.scores.clone(),
    };
    opts.prune.validate().input()?;
    opts.sample.validate().input()?;
    let corpus = crate::pairgen::read_corpus(&a.corpus).input()?;
    let built = build_dataset(&corpus, &opts).input()?;
    write_dataset(&built.pairs, &a.out).internal()?;
    eprintln!(
        "{} pairs from {} steps ({} skipped)",
        built.pairs.len(),
        corpus.len(),
        built.skipped.len()
    );
    let mut inputs = vec![a.corpus.as_path()];
    inputs.extend(a.scores.as_deref());
    finish(RunManifest::new("build", snapshot(a)?, Some(seed)), &inputs, &[&a.out])
}

fn run_train(a: &TrainArgs) -> Result<(), Failure> {
    let seed = effective_seed(a.seed)?;
    let cfg = DpoConfig {
        beta: a.beta,
        learning_rate: a.lr,
        warmup_fraction: a.warmup,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed,
        max_steps: None,
    };
    cfg.validate().input()?;
    let objective = match a.objective {
        ObjectiveArg::Dpo => Objective::Dpo,
        ObjectiveArg::Sft => Objective::Sft,
    };
    let pairs = read_dataset(&a.pairs).input()?;
    let init = PolicyTable::new(a.feature_dim, seed).input()?;
    let examples = pairs
        .iter()
        .map(|p| PairExample::from_pair(&init.hasher(), p))
        .collect::<Result<Vec<_>, _>>()
        .input()?;
    let trained = policy::train_examples(&examples, &cfg, objective, &init).input()?;
    trained.save(&a.out).internal()?;
    let summary = serde_json::json!({
        "pairs": examples.len(),
        "mean_margin_before": policy::mean_margin(&init, &examples),
        "mean_margin_after": policy::mean_margin(&trained, &examples),
    });
    println!("{summary}");
    finish(RunManifest::new("train-toy", snapshot(a)?, Some(seed)), &[&a.pairs], &[&a.out])
}

fn run_eval(a: &EvalArgs) -> Result<(), Failure> {
    let report = aggregate(&a.preds, &a.corpus).input()?;
    let json = serde_json::to_string_pretty(&report).internal()?;
    write_file(&a.report, &(json + "\n"))?;
    println!(
        "ssr {:.4}  op_f1 {}  mean_element_distance {:.4}",
        report.ssr,
        report.op_f1.map_or("n/a".to_string(), |f| format!("{f:.4}")),
        report.mean_element_distance
    );
    finish(RunManifest::new("eval", snapshot(a)?, None), &[&a.preds, &a.corpus], &[&a.report])
}

fn run_stats(a: &StatsArgs) -> Result<(), Failure> {
    let stats = compute_stats(&a.corpus).input()?;
    let ratio = check_click_ratio(&stats);
    let json = serde_json::json!({ "stats": stats, "click_ratio": ratio });
    write_file(&a.out, &(serde_json::to_string_pretty(&json).internal()? + "\n"))?;
    let mut outputs = vec![a.out.as_path()];
    if let Some(csv) = &a.csv {
        write_file(csv, &histograms_csv(&stats))?;
        outputs.push(csv);
    }
    println!("{} steps, {} tasks, {ratio}", stats.steps, stats.tasks);
    finish(RunManifest::new("stats", snapshot(a)?, None), &[&a.corpus], &outputs)
}

pub fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Clean(a) => run_clean(a),
        Command::Prune(a) => run_prune(a),
        Command::Sample(a) => run_sample(a),
        Command::Build(a) => run_build(a),
        Command::TrainToy(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Stats(a) => run_stats(a),
    }
}

/// Parses `argv` (program name first) and runs it; returns the exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "{f}");
            f.exit_code()
        }
    }
}
