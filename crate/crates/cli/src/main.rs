use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use randpad_cli::{failure, resolve_config, run, Command};

#[derive(Parser)]
#[command(name = "randpad", version, about = "Random Padding training, evaluation and position probing")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Train a classifier and write metrics, checkpoint and summary.
    Train(Common),
    /// Evaluate a checkpoint on the configured test split.
    Eval(Common),
    /// Probe encoders for position information.
    Probe(Common),
    /// Run a desk-scale experiment preset.
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; must be empty or absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides applied after the file.
    #[arg(long = "override", value_name = "KEY=VALUE", num_args = 1..)]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error: kind=usage msg={first}");
            return ExitCode::from(2);
        }
    };
    let (command, args) = match cli.command {
        Sub::Train(a) => (Command::Train, a),
        Sub::Eval(a) => (Command::Eval, a),
        Sub::Probe(a) => (Command::Probe, a),
        Sub::Experiment(a) => (Command::Experiment, a),
    };
    let result = resolve_config(&args.config, &args.overrides, args.seed).and_then(|cfg| run(command, &cfg, args.out));
    match result {
        Ok(out) => {
            eprintln!("done: {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", failure::render(&e));
            ExitCode::FAILURE
        }
    }
}
