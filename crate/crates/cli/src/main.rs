//! `crloc`: every workflow of the crate as a subcommand.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad flags or config, 3 a
//! missing input file. Errors are printed as one line on stderr:
//! `crloc: error[<code>]: <message>`.

mod commands;
mod config;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Preset};

#[derive(Debug, Parser)]
#[command(
    name = "crloc",
    version,
    about = "Sub-pixel corneal reflection localization"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML config file; only the keys to change are needed.
    #[arg(long, global = true, env = "CRLOC_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Default set for the network and training sections.
    #[arg(long, global = true, value_enum)]
    preset: Option<Preset>,
    /// Worker threads (1 = serial); defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Add wall-clock columns to training reports.
    #[arg(long, global = true)]
    timing: bool,
    /// Print the resolved config to stderr before running.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic dataset or an eye-frame sequence.
    Synth(commands::SynthArgs),
    /// Stage-1 training from a fresh network.
    Train(commands::TrainArgs),
    /// Stage-2 fine-tuning of a trained model.
    Finetune(commands::FinetuneArgs),
    /// Sub-pixel sweeps over the evaluation grid.
    EvalSweep(commands::EvalSweepArgs),
    /// Oracle sweeps over radius x amplitude.
    EvalOracle(commands::EvalOracleArgs),
    /// Sample-to-sample precision on repeated noisy renders.
    EvalPrecision(commands::EvalPrecisionArgs),
    /// Run the frame pipeline over a directory of frames.
    Pipeline(commands::PipelineArgs),
    /// Precision and accuracy of pipeline outputs.
    Metrics(commands::MetricsArgs),
    /// Fit the P-CR calibration polynomial.
    Calibrate(commands::CalibrateArgs),
    /// Describe a model file.
    ModelInfo(commands::ModelInfoArgs),
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<crloc::Error>() {
            return match err {
                crloc::Error::InvalidParameter(_) => 2,
                crloc::Error::Io { source, .. }
                    if source.kind() == std::io::ErrorKind::NotFound =>
                {
                    3
                }
                _ => 1,
            };
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == std::io::ErrorKind::NotFound {
                return 3;
            }
        }
    }
    1
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .filter_map(|c| c.downcast_ref::<std::io::Error>())
        .any(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn report(code: u8, msg: &str) -> ExitCode {
    eprintln!("crloc: error[{code}]: {}", config::one_line(msg));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("bad arguments");
            return report(
                2,
                &format!("usage: {}", first.trim_start_matches("error: ")),
            );
        }
    };
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => report(exit_code(&e), &format!("{e:#}")),
    }
}
