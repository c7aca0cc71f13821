use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use sodbench::commands::{self, Outcome};
use sodbench::config::{read_config, RunConfig};

/// Adversarial robustness benchmark for salient object detectors.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// TOML or JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Shrink attack and training budgets for a quick run.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Write the synthetic train and test splits.
    SynthData,
    /// Fit the linear toy model on the train split.
    TrainLinear,
    /// Evolve the GP saliency program on the train split.
    TrainGp,
    /// Craft every AE set of the attack suite on the test split.
    Attack,
    /// Score every model on every column and write the reports.
    Evaluate,
    /// Estimate each model's output change inside small input balls.
    ProbeContinuity,
    /// synth-data, train-linear, train-gp, attack and evaluate in order.
    Run,
}

fn execute(cli: Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(p) => read_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    cfg.desk_scale |= cli.desk_scale;
    let cfg = cfg.resolve()?;
    match cli.verb {
        Verb::SynthData => commands::synth_data(&cfg),
        Verb::TrainLinear => commands::train_linear(&cfg),
        Verb::TrainGp => commands::train_gp(&cfg),
        Verb::Attack => commands::attack(&cfg),
        Verb::Evaluate => commands::evaluate(&cfg),
        Verb::ProbeContinuity => commands::probe_continuity(&cfg),
        Verb::Run => commands::run_all(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(Outcome { errors: 0 }) => ExitCode::SUCCESS,
        Ok(Outcome { errors }) => {
            eprintln!("error: {errors} failure(s); see the reports directory");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
