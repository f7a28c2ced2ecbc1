//! Command-line driver: data generation, training, evaluation, sweeps,
//! terminal sessions and the HTTP service.

pub mod config;
pub mod execute;

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use screenwise_core::error::PolicyError;
use screenwise_core::eval::{confidence_trial, curve_csv, evaluation_report, sweep_beta, sweep_m, TrialSettings};
use screenwise_core::policy::{build_policy, load_policy, save_policy, PartitionedPolicy};
use screenwise_core::synth::{generate, load_csv, write_csv, GeneratorConfig};

use config::{FileConfig, PolicyOverrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::PolicyInfeasible(_) => CliError::Infeasible(e.to_string()),
            PolicyError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "screenwise", version, about = "Personalized screening policies with a certified false-negative rate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic training set as CSV
    Generate(GenerateArgs),
    /// Build a policy from a CSV training set
    Train(TrainArgs),
    /// Score a policy on a CSV data set
    Evaluate(EvaluateArgs),
    /// Repeated train/test runs on synthetic data
    Sweep(SweepArgs),
    /// Run one screening session on the terminal
    Execute(ExecuteArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Variant {
    Default,
    TableV,
    Misspecified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Beta,
    M,
    Confidence,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// JSON config file
    #[arg(long, env = config::CONFIG_ENV, hide_env_values = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolicyFlags {
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest tolerable false-negative rate
    #[arg(long)]
    pub eta: Option<f64>,
    /// One minus the confidence level
    #[arg(long)]
    pub delta: Option<f64>,
    /// Weight of false positives against test cost
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight of feature distance against risk gap
    #[arg(long)]
    pub beta: Option<f64>,
    /// Add the generalization slack and minimum partition size
    #[arg(long)]
    pub strict: bool,
}

impl PolicyFlags {
    fn overrides(&self) -> PolicyOverrides {
        PolicyOverrides {
            seed: self.seed,
            eta: self.eta,
            delta: self.delta,
            gamma: self.gamma,
            beta: self.beta,
            strict: self.strict,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Number of records
    #[arg(long)]
    pub size: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bundled population; overrides the config's generator section
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Training CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Output policy JSON
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Policy JSON
    #[arg(long)]
    pub policy: PathBuf,
    /// Evaluation CSV
    #[arg(long)]
    pub data: PathBuf,
    /// Output report JSON
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// What to sweep
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    /// Seeds per grid point
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Bundled population; overrides the config's generator section
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[command(flatten)]
    pub policy: PolicyFlags,
}

#[derive(Debug, Args)]
pub struct ExecuteArgs {
    /// Policy JSON
    #[arg(long)]
    pub policy: PathBuf,
    /// JSON object of raw personal features; prompted for when absent
    #[arg(long)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Policy JSON; without one, session routes answer 409
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Port on 127.0.0.1
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

fn generator_for(variant: Option<Variant>, file: &FileConfig) -> GeneratorConfig {
    match variant {
        Some(Variant::Default) => GeneratorConfig::default(),
        Some(Variant::TableV) => GeneratorConfig::table_v(),
        Some(Variant::Misspecified) => GeneratorConfig::misspecified(),
        None => file.generator.clone().unwrap_or_default(),
    }
}

fn load_policy_file(path: &Path) -> Result<PartitionedPolicy, CliError> {
    load_policy(path).with_context(|| format!("policy {}", path.display())).map_err(CliError::Other)
}

fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config::load(args.config.config.as_deref())?;
    let mut gen = generator_for(args.variant, &file);
    if let Some(size) = args.size {
        gen.size = size;
    }
    let seed = args.seed.unwrap_or(gen.seed);
    gen.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let records = generate(&gen, seed).map_err(|e| CliError::Config(e.to_string()))?;
    write_csv(&records, &file.schema(), &args.out).context("writing data")?;
    writeln!(out, "wrote {} records to {}", records.len(), args.out.display()).context("stdout")?;
    Ok(())
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config::load(args.config.config.as_deref())?;
    let cfg = args.policy.overrides().apply(file.policy.clone())?;
    let schema = file.schema();
    let data = load_csv(&args.data, &schema).context("reading training data")?;
    for r in &data.rejections {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    let policy = build_policy(&data.records, &schema, &file.risk(), &cfg)?;
    save_policy(&policy, &args.out).context("writing policy")?;
    writeln!(
        out,
        "trained {} partition(s) on {} records ({} rejected) -> {}",
        policy.len(),
        data.records.len(),
        data.rejections.len(),
        args.out.display()
    )
    .context("stdout")?;
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config::load(args.config.config.as_deref())?;
    let rules = file.guideline();
    rules.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let policy = load_policy_file(&args.policy)?;
    let data = load_csv(&args.data, &policy.schema).context("reading evaluation data")?;
    for r in &data.rejections {
        log::warn!("line {}: {}", r.line, r.reason);
    }
    let provenance = args.data.display().to_string();
    let report = evaluation_report(&policy, &data.records, &provenance, Some(&rules))?;
    let json = serde_json::to_string_pretty(&report).context("encoding report")?;
    std::fs::write(&args.out, json + "\n").context("writing report")?;
    let o = &report.policy.overall;
    writeln!(
        out,
        "{} records: fnr {:.4}, fpr {:.4}, mean cost {:.4} -> {}",
        report.records,
        o.fnr,
        o.fpr,
        o.mean_cost,
        args.out.display()
    )
    .context("stdout")?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let file = config::load(args.config.config.as_deref())?;
    let cfg = args.policy.overrides().apply(file.policy.clone())?;
    let sweep = &file.sweep;
    let mut settings = TrialSettings::new(generator_for(args.variant, &file), cfg.clone(), sweep.train_size);
    settings.schema = file.schema();
    settings.risk = file.risk();
    settings.test_size = sweep.test_size;
    let base = cfg.seed;
    let seeds: Vec<u64> = (1..=args.runs as u64).map(|r| base + r).collect();
    let (csv, summary) = match args.kind {
        SweepKind::Beta => {
            let result = sweep_beta(&settings, &sweep.betas, &seeds)?;
            (curve_csv(&result.points), serde_json::json!({ "selected_beta": result.selected }))
        }
        SweepKind::M => {
            let etas = if sweep.etas.is_empty() { vec![cfg.eta] } else { sweep.etas.clone() };
            let points = sweep_m(&settings, &sweep.sizes, &etas, &seeds)?;
            (curve_csv(&points), serde_json::json!({ "points": points.len() }))
        }
        SweepKind::Confidence => {
            let trial = confidence_trial(&settings, args.runs, base)?;
            (
                curve_csv(&trial.details),
                serde_json::json!({
                    "runs": trial.runs,
                    "violations": trial.violations,
                    "infeasible": trial.infeasible,
                    "fraction": trial.fraction,
                }),
            )
        }
    };
    let csv = csv.context("encoding csv")?;
    std::fs::write(&args.out, csv).context("writing curve")?;
    writeln!(out, "{summary}").context("stdout")?;
    Ok(())
}

fn cmd_execute(args: &ExecuteArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let policy = load_policy_file(&args.policy)?;
    let features = match &args.features {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            execute::features_from_json(&text, &policy.schema)?
        }
        None => execute::prompt_features(&policy.schema, input, out)?,
    };
    execute::run_session(&policy, features, input, out)?;
    Ok(())
}

fn cmd_serve(args: &ServeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let policy = args.policy.as_deref().map(load_policy_file).transpose()?;
    let state = Arc::new(screenwise_service::AppState::new(policy, screenwise_service::DEFAULT_TTL));
    let addr = SocketAddr::from(([127, 0, 0, 1], args.port));
    writeln!(out, "serving on http://{addr}/api/v1").context("stdout")?;
    out.flush().context("stdout")?;
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(screenwise_service::serve(state, addr)).context("server")?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code; diagnostics go to `err`.
pub fn run<I, T>(args: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Execute(a) => cmd_execute(a, input, out),
        Command::Serve(a) => cmd_serve(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = match &e {
                CliError::Other(inner) => writeln!(err, "error: {inner:#}"),
                _ => writeln!(err, "error: {e}"),
            };
            e.exit_code()
        }
    }
}
