use std::path::PathBuf;
use std::process::ExitCode;

use bottleneck_core::harness::{run_config_file, Phase};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bottleneck", version, about = "Train and analyse goal-bottleneck policies on gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Run a single seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Phase-1 bottleneck training.
    Train(Common),
    /// Phase-2 training with an exploration bonus.
    Transfer(Common),
    /// Greedy evaluation of saved checkpoints.
    Evaluate(Common),
    /// Bound-chain checks on random tabular tasks.
    Oracle(Common),
    /// Per-cell KL map of a frozen encoder.
    Heatmap(Common),
    /// Per-cell visit counts from a transfer run.
    Visitmap(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (phase, args) = match cli.command {
        Command::Train(a) => (Phase::Train, a),
        Command::Transfer(a) => (Phase::Transfer, a),
        Command::Evaluate(a) => (Phase::Evaluate, a),
        Command::Oracle(a) => (Phase::Oracle, a),
        Command::Heatmap(a) => (Phase::Heatmap, a),
        Command::Visitmap(a) => (Phase::Visitmap, a),
    };
    match run_config_file(phase, &args.config, &args.out, args.seed) {
        Ok(manifest) => {
            log::info!("wrote {} files to {}", manifest.files.len(), args.out.display());
            if let Some(e) = &manifest.eval {
                println!("success_rate {} over {} episodes", e.success_rate, e.episodes);
            }
            if let Some(o) = &manifest.oracle {
                println!("bound chain held on {}/{} tasks", o.passed, o.tasks);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
