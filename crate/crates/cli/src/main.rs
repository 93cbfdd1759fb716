//! `hybridtrack` command-line entry point.
//!
//! Exit codes: 0 success, 2 bad arguments or configuration, 3 malformed
//! input files, 4 internal invariant violation.

mod ablate;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridtrack::config::RunConfig;
use hybridtrack::Error;

#[derive(Parser)]
#[command(name = "hybridtrack", version, about = "Video panoptic tracking: simulate, track, train, evaluate, ablate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run configuration. Precedence, lowest first: built-in defaults, the
/// `--config` file, `--set` pairs in order, then the dedicated flags.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set theta=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Tracker mode: instance, pixel or hybrid.
    #[arg(long)]
    mode: Option<String>,
    /// Assignment threshold `tau_match`.
    #[arg(long)]
    tau: Option<String>,
    /// Temporal rescue threshold.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long, value_name = "BOOL")]
    mutual_check: Option<String>,
    #[arg(long, value_name = "BOOL")]
    temporal: Option<String>,
    #[arg(long)]
    memory_window: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    lr: Option<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set {pair:?}: expected KEY=VALUE")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("mode", &self.mode),
            ("tau_match", &self.tau),
            ("theta", &self.theta),
            ("mutual_check", &self.mutual_check),
            ("temporal", &self.temporal),
            ("memory_window", &self.memory_window),
            ("seed", &self.seed),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a preset or a JSON scene spec to a sequence directory.
    Simulate(commands::SimulateArgs),
    /// Assign persistent instance ids to a sequence.
    Track(commands::TrackArgs),
    /// Train the embedding head on simulator supervision.
    Train(commands::TrainArgs),
    /// Score predicted frames against ground truth with VPQ.
    Evaluate(commands::EvaluateArgs),
    /// Rerun the tracker grid over preset scenes and tabulate VPQ.
    Ablate(ablate::AblateArgs),
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::InvalidConfig(_) | Error::SpecOutOfBounds(_) | Error::ShapeMismatch(_) => 2,
        Error::Invariant(_) => 4,
        e if e.is_malformed_input() => 3,
        Error::DimensionMismatch { .. } | Error::LengthMismatch { .. } | Error::EmptyMask => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Track(a) => commands::track(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => ablate::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
