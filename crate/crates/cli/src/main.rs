//! Experiment harness: track sequences, generate synthetic data, solve single
//! weight subproblems and sweep parameters.
//!
//! Exit codes: 0 on success, 2 for configuration and argument errors, 3 for
//! data ingestion and output errors.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "decontam", version, about = "Joint model and sample-weight learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence source for each repetition and write reports.
    Track(TrackArgs),
    /// Generate a synthetic sequence directory from a script.
    Synth(SynthArgs),
    /// Solve one weight subproblem and print the weights.
    Qp(QpArgs),
    /// Run the tracker for each value of one configuration key.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunFlags {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `run.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    /// joint, fixed or psr.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long = "psr-threshold")]
    psr_threshold: Option<f64>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl RunFlags {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides::default();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.pairs.push((k.to_string(), v));
            }
        };
        push("run.seed", self.seed.map(|v| v.to_string()));
        push("run.reps", self.reps.map(|v| v.to_string()));
        push("strategy.kind", self.strategy.clone());
        push("joint.mu", self.mu.map(|v| v.to_string()));
        push("strategy.gamma", self.gamma.map(|v| v.to_string()));
        push("strategy.psr_threshold", self.psr_threshold.map(|v| v.to_string()));
        push("run.format", self.format.clone());
        o.out = self.out.clone();
        o
    }
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct SynthArgs {
    /// Corruption script (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QpArgs {
    /// Comma-separated per-frame losses.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    losses: Vec<f64>,
    /// Comma-separated positive prior weights, rescaled to unit sum.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    priors: Vec<f64>,
    #[arg(long)]
    mu: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Configuration key to vary.
    #[arg(long, default_value = "joint.mu")]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    values: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track(a) => run::track(&a.run.config, &a.run.overrides()),
        Command::Synth(a) => run::synth(&a.config, a.seed, &a.out),
        Command::Qp(a) => run::qp(&a.losses, &a.priors, a.mu),
        Command::Sweep(a) => run::sweep(&a.run.config, &a.run.overrides(), &a.param, &a.values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 2,
                CliError::Data(_) => 3,
            })
        }
    }
}
