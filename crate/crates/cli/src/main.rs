mod commands;
mod config;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use occ_core::exec::Execution;

use crate::commands::{DecodeArgs, EncodeArgs};
use crate::config::CodecArgs;
use crate::error::CliError;

/// Zero-delay lossy compression with per-sequence outage guarantees.
///
/// Exit codes: 0 success, 2 config error, 3 I/O error, 4 desync or
/// integrity error.
#[derive(Parser, Debug)]
#[command(name = "occ", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a file into a container.
    Encode {
        /// Input file (bytes, or whitespace-separated token ids for non-byte predictors).
        input: PathBuf,
        /// Container path.
        #[arg(long)]
        out: PathBuf,
        /// JSON metrics path (stdout if omitted).
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Per-step CSV trace path.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Reconstruct a file from a container.
    Decode {
        /// Container file.
        input: PathBuf,
        /// Reconstruction path.
        #[arg(long)]
        out: PathBuf,
        /// Original input, to audit the distortion.
        #[arg(long)]
        original: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Run a scheme comparison grid described by the [sweep] config section.
    Sweep {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Run grid points one at a time.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        codec: CodecArgs,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode {
            input,
            out,
            metrics,
            trace,
            codec,
        } => {
            let settings = codec.resolve()?;
            commands::encode(
                &settings,
                EncodeArgs {
                    input: &input,
                    out: &out,
                    metrics: metrics.as_deref(),
                    trace: trace.as_deref(),
                },
            )?;
        }
        Command::Decode {
            input,
            out,
            original,
            metrics,
            codec,
        } => {
            let settings = codec.resolve()?;
            commands::decode(
                &settings,
                DecodeArgs {
                    input: &input,
                    out: &out,
                    original,
                    metrics: metrics.as_deref(),
                },
            )?;
        }
        Command::Sweep {
            out,
            sequential,
            codec,
        } => {
            let settings = codec.resolve()?;
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let done = sweep::sweep(&settings, &out, exec)?;
            eprintln!(
                "wrote {} result rows and {} summary rows to {}",
                done.rows,
                done.summary_rows,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("occ: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
