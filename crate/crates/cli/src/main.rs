//! `fairgen` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid data or configuration,
//! 3 internal error.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairgen_core::selection::SelectionMode;

#[derive(Debug, Parser)]
#[command(name = "fairgen", version, about = "Group fairness evaluation and selective training for text generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score generated text against references (one JSON record per case).
    Score(ScoreArgs),
    /// Fill label vectors with the keyword labeler.
    Label(LabelArgs),
    /// Per-group summaries and pairwise tests for a set of scores.
    Fairness(FairnessArgs),
    /// Compare a baseline and a treated fairness report (CSV).
    Compare(CompareArgs),
    /// Top-gamma selection over per-case losses.
    Select(SelectArgs),
    /// Generate a synthetic two-group corpus.
    Synth(SynthArgs),
    /// Train baseline and selective toy models and compare their fairness.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Args)]
struct CaseInput {
    /// Line-delimited JSON case file.
    #[arg(long)]
    cases: PathBuf,
    /// Abort on the first invalid record instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    input: CaseInput,
    /// Scorer configuration (JSON with optional `metrics` and `lexicon`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LabelArgs {
    #[command(flatten)]
    input: CaseInput,
    /// Lexicon JSON: observation name to phrase list.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FairnessArgs {
    /// Score records written by `score`.
    #[arg(long)]
    scores: PathBuf,
    #[command(flatten)]
    input: CaseInput,
    /// Comma-separated attribute axes, e.g. `sex` or `sex,race`.
    #[arg(long)]
    group: String,
    /// Report configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bootstrap seed; overrides the configuration file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    treated: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Line-delimited `{case_id, ce, ranking?}` records.
    #[arg(long)]
    losses: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value = "ce_only")]
    mode: SelectionMode,
    /// Write ids here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed. Without it, the seeds listed in the
    /// configuration are used, or seed 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Selected fraction for the treated model.
    #[arg(long, alias = "selection.gamma")]
    gamma: Option<f64>,
    /// Selection criterion for the treated model.
    #[arg(long, alias = "selection.mode")]
    mode: Option<SelectionMode>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<fairgen_core::Error> for Failure {
    fn from(e: fairgen_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Score(a) => commands::score(&a.input.cases, a.input.strict, a.config.as_deref(), &a.out),
        Command::Label(a) => commands::label(&a.input.cases, a.input.strict, a.config.as_deref(), &a.out),
        Command::Fairness(a) => commands::fairness(commands::FairnessInput {
            scores: &a.scores,
            cases: &a.input.cases,
            strict: a.input.strict,
            group: &a.group,
            config: a.config.as_deref(),
            seed: a.seed,
            out: &a.out,
        }),
        Command::Compare(a) => commands::compare(&a.base, &a.treated, &a.out),
        Command::Select(a) => commands::select(&a.losses, a.gamma, a.mode, a.out.as_deref()),
        Command::Synth(a) => commands::synth(a.config.as_deref(), a.seed, &a.out),
        Command::TrainToy(a) => commands::train_toy(a.config.as_deref(), a.seed, a.gamma, a.mode, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Failure::Usage(String::new()).code())
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    std::panic::set_hook(Box::new(|info| {
        eprintln!("fairgen: internal error: {info}");
    }));
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("fairgen: {}", f.message());
            ExitCode::from(f.code())
        }
        Err(_) => ExitCode::from(Failure::Internal(String::new()).code()),
    }
}
