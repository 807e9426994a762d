mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Benchmark harness for LLM-generated answer set programs.
#[derive(Debug, Parser)]
#[command(name = "aspbench", version)]
pub struct Cli {
    /// Dataset root with one directory per problem bundle
    /// [default: $ASPBENCH_DATASET, else ./problems].
    #[arg(long, global = true, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// clingo binary [default: $ASPBENCH_SOLVER, else clingo on PATH].
    #[arg(long, global = true, value_name = "PATH")]
    pub solver: Option<PathBuf>,
    /// Log more; repeat for debug output.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score one candidate program against a problem's gold encoding.
    Evaluate(EvaluateArgs),
    /// Run the generate, match and evaluate pipeline over the whole grid.
    Pipeline(PipelineArgs),
    /// Check that a test suite kills seeded mutants of its gold encoding.
    Validate(ValidateArgs),
    /// Write the deterministic replay fixtures used by `--mode replay`.
    RecordFixtures(FixturesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricChoice {
    ModelBased,
    TestSuite,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Replay,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Problem bundle name.
    #[arg(long)]
    pub problem: String,
    /// Candidate ASP program; facts over input predicates are ignored.
    #[arg(long, value_name = "FILE")]
    pub candidate: PathBuf,
    /// Matcher reply renaming candidate predicates to gold ones, e.g.
    /// {'node':'vertex'}. Without it the candidate must use gold names.
    #[arg(long, value_name = "FILE")]
    pub mapping: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub metric: MetricChoice,
    /// Directory for the JSON report.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Solver timeout per call, in seconds [default: the bundle's].
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML file with any of the settings below; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory for reports and per-cell artifacts [default: out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Parallel cells [default: 1].
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,
    /// Solver timeout per call, in seconds [default: each bundle's].
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<u64>,
    /// Generator calls per (problem, variant) [default: 5].
    #[arg(long, value_name = "N")]
    pub runs: Option<u32>,
    /// Comma-separated subset of original,paraphrase1,paraphrase2 [default: all].
    #[arg(long, value_name = "LIST")]
    pub variants: Option<String>,
    /// Comma-separated problem names [default: every bundle].
    #[arg(long, value_name = "LIST")]
    pub problems: Option<String>,
    /// Metrics to compute [default: both].
    #[arg(long, value_enum)]
    pub metric: Option<MetricChoice>,
    /// Live endpoints or recorded fixtures [default: replay].
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Recorded in the summary.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replay fixtures directory [default: fixtures/replay].
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Generator model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Matcher model name [default: the generator model].
    #[arg(long)]
    pub matcher_model: Option<String>,
    /// Chat-completions base URL for live mode, e.g. https://api.openai.com/v1.
    #[arg(long, value_name = "URL")]
    pub base_url: Option<String>,
    /// Environment variable holding the API key for live mode.
    #[arg(long, value_name = "VAR")]
    pub api_key_env: Option<String>,
    /// Prompt cache for live mode [default: <out>/cache].
    #[arg(long, value_name = "DIR")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Problem bundle name; repeat for several [default: every bundle].
    #[arg(long)]
    pub problem: Vec<String>,
    /// Mutants per bundle [default: the bundle's manifest].
    #[arg(long, value_name = "N")]
    pub mutants: Option<usize>,
    /// Mutation seed [default: the bundle's manifest].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for the JSON reports.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Solver timeout per call, in seconds [default: the bundle's].
    #[arg(long, value_name = "SECS")]
    pub timeout: Option<u64>,
    /// Bundles validated in parallel.
    #[arg(long, value_name = "N", default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Fixtures directory.
    #[arg(long, value_name = "DIR", default_value = "fixtures/replay")]
    pub out: PathBuf,
    /// Runs per (problem, variant).
    #[arg(long, value_name = "N", default_value_t = 5)]
    pub runs: u32,
    /// Comma-separated problem names [default: every bundle].
    #[arg(long, value_name = "LIST")]
    pub problems: Option<String>,
    /// Model name the fixtures are keyed under.
    #[arg(long, default_value = aspbench_harness::fixtures::FIXTURE_MODEL)]
    pub model: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    let result = match &cli.command {
        Command::Evaluate(a) => commands::evaluate(&cli, a),
        Command::Pipeline(a) => commands::pipeline(&cli, a),
        Command::Validate(a) => commands::validate(&cli, a),
        Command::RecordFixtures(a) => commands::record_fixtures(&cli, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
