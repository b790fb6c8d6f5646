//! Command-line surface. Every run-shaped subcommand shares the same
//! provider and config override flags; resolution order is always
//! flag > config file > built-in default.

use crate::config::{self, ConfigFlags, FileConfig, ResolvedConfig};
use crate::error::CliError;
use crate::providers::ProviderMode;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "bloomloop",
    version,
    about = "Judge-panel evaluation and feedback-driven refinement for math word problems",
    after_help = "Credentials are read from the environment only: set BLOOMLOOP_API_KEY \
                  (or OPENAI_API_KEY). BLOOMLOOP_BASE_URL overrides the endpoint."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Score each problem once with the judge panel (no refinement)
    Evaluate(BatchArgs),
    /// Run the full evaluate-refine loop over a dataset
    Refine(BatchArgs),
    /// Generate deliberately flawed problems with the generator model
    SynthBad(SynthArgs),
    /// Render a report from a stored run's traces to stdout
    Report(ReportArgs),
    /// Re-run a recorded run offline and verify artifacts byte for byte
    ReplayVerify(ReplayVerifyArgs),
}

#[derive(Args, Clone)]
pub struct ProviderArgs {
    /// Where model responses come from
    #[arg(long, value_enum, default_value_t = ProviderMode::Live)]
    pub provider: ProviderMode,
    /// Cassette file: input for replay, output for record
    /// (default <output>/cassette.json)
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Scripted-response file, or directory of *.json rule files
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Record mode: tolerate repeated identical requests (the first
    /// recording is reused)
    #[arg(long)]
    pub allow_duplicates: bool,
}

#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// TOML config file (all keys optional)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Weight on the pass-rate term of the composite score
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight on the agreement term of the composite score
    #[arg(long)]
    pub beta: Option<f64>,
    /// Weight on the confidence term of the composite score
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Per-judge pass threshold (performance score must exceed it)
    #[arg(long)]
    pub tau_agent: Option<f64>,
    /// Composite quality gate (Q must exceed it to pass)
    #[arg(long)]
    pub tau_q: Option<f64>,
    /// Round budget per problem
    #[arg(long)]
    pub max_rounds: Option<u32>,
    /// Model used by the judge panel
    #[arg(long)]
    pub evaluator_model: Option<String>,
    /// Model used to rewrite failing problems
    #[arg(long)]
    pub generator_model: Option<String>,
    /// Maximum simultaneous provider calls
    #[arg(long)]
    pub concurrency: Option<usize>,
}

impl ConfigArgs {
    fn flags(&self) -> ConfigFlags {
        ConfigFlags {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            tau_agent: self.tau_agent,
            tau_q: self.tau_q,
            max_rounds: self.max_rounds,
            evaluator_model: self.evaluator_model.clone(),
            generator_model: self.generator_model.clone(),
            concurrency: self.concurrency,
        }
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        config::resolve(file, &self.flags())
    }
}

#[derive(Args)]
pub struct BatchArgs {
    /// Input dataset: a JSON array of problem records
    #[arg(long)]
    pub dataset: PathBuf,
    /// Run directory for artifacts
    #[arg(long)]
    pub output: PathBuf,
    /// Skip records that fail validation instead of stopping
    #[arg(long)]
    pub lenient: bool,
    /// Row label for report tables (default: the generator model)
    #[arg(long)]
    pub label: Option<String>,
    /// Directory of judge prompt templates, one <level>.txt per judge
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Refinement prompt file overriding the built-in one
    #[arg(long)]
    pub refine_prompt: Option<PathBuf>,
    /// Print the resolved config with provenance and exit; no provider
    /// calls, nothing written
    #[arg(long)]
    pub dry_run: bool,
    /// Write into a run directory that already holds a manifest
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct SynthArgs {
    /// How many flawed problems to generate
    #[arg(long)]
    pub count: usize,
    /// Run directory for artifacts
    #[arg(long)]
    pub output: PathBuf,
    /// Stop at the first slot that cannot produce a valid problem
    #[arg(long)]
    pub fail_fast: bool,
    /// Print the resolved config with provenance and exit; no provider
    /// calls, nothing written
    #[arg(long)]
    pub dry_run: bool,
    /// Write into a run directory that already holds a manifest
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Stored run directory (must contain traces/)
    #[arg(long)]
    pub run: PathBuf,
    /// Output format: json, csv, or md
    #[arg(long, default_value = "md")]
    pub format: String,
    /// Row label override (default: the stored run's label)
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Args)]
pub struct ReplayVerifyArgs {
    /// Stored run directory containing manifest.json and its cassette
    #[arg(long)]
    pub run: PathBuf,
}
