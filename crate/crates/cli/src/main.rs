//! `cv-audit`: build a corpus and plan, collect scores, estimate and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "cv-audit", version, about = "Name-based bias audit of automated CV screening")]
pub struct Cli {
    /// TOML or JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (vacancies, CV templates, name pools).
    SynthCorpus(SynthArgs),
    /// Cross the corpus with the identity grid and draw temperatures.
    Design(DesignArgs),
    /// Score every pending trial of a plan and append to the observation log.
    Run(RunArgs),
    /// Join observations with vacancy covariates into an analysis CSV.
    Export(ExportArgs),
    /// Fit one of the regression models with bootstrap inference.
    Estimate(EstimateArgs),
    /// Penalised logit invitation curves over a range of cutoffs.
    Sweep(SweepArgs),
    /// Figure and table analogs as CSV plus SVG.
    Report(ReportArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct Inputs {
    /// Corpus directory (vacancies.jsonl, cvs.jsonl, names.csv).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Name pool CSV overriding the corpus directory's names.csv.
    #[arg(long)]
    pub names: Option<PathBuf>,
    /// Experiment plan (JSON lines).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Observation log (JSON lines).
    #[arg(long)]
    pub obs: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TableInputs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Exported analysis CSV; replaces --corpus/--plan/--obs.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed of the corpus generator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sample this many vacancies instead of the balanced occupation grid.
    #[arg(long)]
    pub vacancies: Option<usize>,
    #[arg(long)]
    pub names_per_cell: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Master seed for name and temperature assignment.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plan output (JSON lines).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Http,
    Synthetic,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BiasPreset {
    /// No identity effects.
    Null,
    /// Ethnicity penalties of the reference OLS model.
    Reference,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Model identifier sent to an HTTP endpoint.
    #[arg(long)]
    pub model: Option<String>,
    /// Chat-completions URL for the HTTP provider.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// Seed of the synthetic provider.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic bias preset.
    #[arg(long, value_enum, conflicts_with = "bias_file")]
    pub bias: Option<BiasPreset>,
    /// Synthetic bias model as JSON or TOML.
    #[arg(long)]
    pub bias_file: Option<PathBuf>,
    /// Observation log recorded earlier, for the replay provider.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Maximum concurrent requests.
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    /// Requests per second.
    #[arg(long)]
    pub rate_limit: Option<f64>,
    /// Append every request attempt to this JSON-lines file.
    #[arg(long)]
    pub attempts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Drop trials without a score.
    #[arg(long)]
    pub complete_cases: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub inputs: TableInputs,
    /// eq1 … eq5.
    #[arg(long)]
    pub model: Option<String>,
    /// Wild cluster bootstrap replications; 0 keeps classical SEs.
    #[arg(long)]
    pub boot: Option<usize>,
    /// holm, bh or by.
    #[arg(long)]
    pub adjust: Option<String>,
    /// Adjust all slopes instead of the identity terms only.
    #[arg(long)]
    pub all_slopes: bool,
    /// Interacted job covariates for eq4/eq5 (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub by: Option<Vec<String>>,
    /// Treat temperature as a continuous regressor.
    #[arg(long)]
    pub continuous_temperature: bool,
    /// Bootstrap seed; required when --boot is positive.
    #[arg(long)]
    pub seed: Option<u64>,
    /// fit.json output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: TableInputs,
    /// Inclusive cutoff range, e.g. 1..100.
    #[arg(long)]
    pub cutoffs: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub inputs: TableInputs,
    /// Bootstrap replications for the eq1 fit.
    #[arg(long)]
    pub boot: Option<usize>,
    /// Bootstrap seed; required when --boot is positive.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Inclusive cutoff range for the sweep figure, e.g. 1..100.
    #[arg(long)]
    pub cutoffs: Option<String>,
    /// Cutoff for the per-name invitation probability.
    #[arg(long)]
    pub cutoff: Option<u8>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            for cause in e.chain().skip(1) {
                eprintln!("  caused by: {cause}");
            }
            ExitCode::FAILURE
        }
    }
}
