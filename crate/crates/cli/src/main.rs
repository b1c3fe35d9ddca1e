use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnc_core::harness::{
    self, BlackjackEval, ControlSpec, Experiment, ExperimentConfig, OracleCert, RateSpec, EXIT_INPUT,
};

/// Compress-and-control experiments.
#[derive(Debug, Parser)]
#[command(name = "cnc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Blackjack policy evaluation against exact Q.
    EvalBlackjack(RunArgs),
    /// ε-greedy control on MiniPong or an explicit MDP.
    Control(RunArgs),
    /// Certify the stationary-law oracle against dynamic programming.
    OracleCert(RunArgs),
    /// Convergence rate of the frequency-estimator engine.
    RateTest(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML experiment config; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

fn load(kind: &str, default: Experiment, args: &RunArgs) -> Result<ExperimentConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
            c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
            c
        }
        None => ExperimentConfig::new(default),
    };
    if config.experiment.name() != kind {
        return Err(format!(
            "config describes a {} experiment, not {kind}",
            config.experiment.name()
        ));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.trials.is_some() {
        config.trials = args.trials;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, default, args) = match &cli.command {
        Command::EvalBlackjack(a) => ("eval-blackjack", Experiment::EvalBlackjack(BlackjackEval::default()), a),
        Command::Control(a) => ("control", Experiment::Control(ControlSpec::default()), a),
        Command::OracleCert(a) => ("oracle-cert", Experiment::OracleCert(OracleCert::default()), a),
        Command::RateTest(a) => ("rate-test", Experiment::RateTest(RateSpec::default()), a),
    };
    let config = match load(kind, default, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    match harness::run(&config, &args.out) {
        Ok(report) => {
            for check in &report.checks {
                println!("{check}");
            }
            println!("wrote {} files to {}", report.files.len(), args.out.display());
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
