//! The `adaptrl` command line. `main.rs` only parses arguments and maps
//! errors to exit codes; everything else lives here so it can be tested.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod analyze;
pub mod commands;
pub mod manifest;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for internal failures.
pub const EXIT_INTERNAL: i32 = 1;
/// Exit code for bad input or failed validation.
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

pub(crate) fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

pub(crate) fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

// ── Arguments ───────────────────────────────────────────────────────────

#[derive(Debug, Parser)]
#[command(name = "adaptrl", version, about = "Learn, evaluate and serve adaptive AI-assistance policies")]
pub struct Cli {
    /// Worker threads for cohort generation and refits (0 = all cores).
    /// Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort of episodes with the synthetic behavior model.
    Simulate(SimulateArgs),
    /// Train a Q-table on episodes and write the greedy policy.
    Train(TrainArgs),
    /// Policy distributions, chi-squared, randomization test, correlations, cohort evaluations.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Check episodes, policies or content packs.
    Validate(ValidateArgs),
    /// Generate a synthetic content pack.
    Content(ContentArgs),
    /// Run the session service; the listen address comes from ADAPTRL_ADDR.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "data_collection")]
    pub design: String,
    /// exploratory, a baseline (sxai, explanation_only, random, no_ai) or a policy file.
    #[arg(long, default_value = "exploratory")]
    pub policy: String,
    /// Behavior model TOML; built-in defaults when omitted.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    /// Share of the cohort in the Low NFC group.
    #[arg(long, default_value_t = 0.5)]
    pub low_fraction: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Accuracy,
    Learning,
    Combined,
    Custom,
}

#[derive(Debug, Clone, Args)]
pub struct ObjectiveArgs {
    #[arg(long, value_enum, default_value = "accuracy")]
    pub objective: ObjectiveArg,
    /// Weight of the distal term (custom objective only).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Discount factor (custom objective only).
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    /// States with fewer dataset visits than this fall back to `--fallback`.
    #[arg(long, default_value_t = 1)]
    pub min_visits: u64,
    #[arg(long, default_value = "no_assistance")]
    pub fallback: String,
    /// Reshuffle episode order every sweep (needs a seed).
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Action counts of a policy over state subsets.
    Dist(DistArgs),
    /// Chi-squared between the Low and High NFC halves of a policy.
    Chi2(Chi2Args),
    /// Label-permutation randomization test with policy refits.
    Randtest(RandtestArgs),
    /// Pearson correlation between two per-episode metrics, with a bootstrap CI.
    Corr(CorrArgs),
    /// Simulated policy-vs-baseline cohort evaluation.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Chi2Args {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Strict,
    Inclusive,
    Smoothed,
}

#[derive(Debug, Args)]
pub struct RandtestArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 200)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1)]
    pub min_visits: u64,
    #[arg(long, default_value = "no_assistance")]
    pub fallback: String,
    #[arg(long, value_enum, default_value = "strict")]
    pub rule: RuleArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    NfcScore,
    Immediate,
    Pre,
    Post,
    Learning,
    Overreliance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    All,
    Low,
    High,
}

#[derive(Debug, Args)]
pub struct CorrArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    #[arg(long, value_enum, default_value = "overreliance")]
    pub x: MetricArg,
    #[arg(long, value_enum, default_value = "post")]
    pub y: MetricArg,
    #[arg(long, value_enum, default_value = "all")]
    pub group: GroupArg,
    /// Count only revealed on-demand steps as assisted in overreliance.
    #[arg(long)]
    pub revealed_only: bool,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "eval1")]
    pub design: String,
    /// `label=spec` or `spec`, where spec is a baseline name or a policy file. Repeatable.
    #[arg(long = "condition", required = true)]
    pub conditions: Vec<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Participants per condition per NFC group.
    #[arg(long, default_value_t = 150)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long)]
    pub revealed_only: bool,
    /// Also write immediate-accuracy contrasts of every condition against this one.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub episodes: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    /// Design a pack must be large enough for.
    #[arg(long, default_value = "eval1")]
    pub design: String,
}

#[derive(Debug, Args)]
pub struct ContentArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 48)]
    pub size: usize,
    /// Design the pack must be large enough for.
    #[arg(long, default_value = "eval1")]
    pub design: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Run one parsed command on a pool of `cli.jobs` workers.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(internal)?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Analyze(a) => analyze::run(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Content(a) => commands::content(&a),
        Command::Serve(a) => commands::serve(&a),
    })
}
