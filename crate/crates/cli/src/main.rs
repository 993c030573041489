use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use partitur_core::fixtures::demo;
use partitur_core::pipeline::{self, Fault, PipelineError, RunOptions, Stage};

/// Exit code for command-line usage errors. 2 is taken by BLOCKED.
const EXIT_USAGE: u8 = 64;
const EXIT_ERROR: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "partitur",
    version,
    about = "Turn a recorded talk and its slides into a publication bundle"
)]
struct Cli {
    /// Directory holding one sub-directory per presentation.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage; the bundle lands in work/<ID>/out only if all gates pass.
    FullPipeline {
        id: String,
        /// Pipeline config (TOML). Defaults to work/<ID>/config.toml if present.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the offline mock provider.
        #[arg(long)]
        mock: bool,
        /// Keep artifacts from the previous run that still pass their gates.
        #[arg(long)]
        resume: bool,
    },
    /// Run a single stage against existing upstream artifacts.
    Stage {
        name: Stage,
        id: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mock: bool,
    },
    /// Print the last run's timings, digests and quality metrics.
    Report { id: String },
    /// Write the 17-slide demo presentation to work/003.
    Fixture,
}

fn options(config: Option<PathBuf>, mock: bool, resume: bool) -> Result<RunOptions> {
    let fault = Fault::from_env().map_err(anyhow::Error::msg)?;
    Ok(RunOptions {
        config,
        mock,
        resume,
        fault,
        provider: None,
    })
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn pipeline_exit(err: PipelineError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::FullPipeline {
            id,
            config,
            mock,
            resume,
        } => {
            let opts = options(config, mock, resume)?;
            match pipeline::full_pipeline(&cli.work, &id, &opts) {
                Ok(result) => {
                    print_json(&result)?;
                    if let Some(f) = &result.failure {
                        eprintln!(
                            "FAILED at {}: {}",
                            result.failed_stage.map_or("?", Stage::name),
                            f.message
                        );
                    }
                    Ok(ExitCode::from(result.exit_code() as u8))
                }
                Err(e) => Ok(pipeline_exit(e)),
            }
        }
        Command::Stage {
            name,
            id,
            config,
            mock,
        } => {
            let opts = options(config, mock, false)?;
            match pipeline::run_stage(&cli.work, &id, name, &opts) {
                Ok(outcome) => {
                    println!(
                        "{} -> {} ({}, {} ms)",
                        outcome.stage,
                        outcome.artifact.display(),
                        outcome.digest.short(),
                        outcome.elapsed_ms
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => Ok(pipeline_exit(e)),
            }
        }
        Command::Report { id } => match pipeline::report(&cli.work, &id) {
            Ok(report) => {
                print_json(&report)?;
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => Ok(pipeline_exit(e)),
        },
        Command::Fixture => {
            let fx = demo::write_fixture(&cli.work).context("writing the demo presentation")?;
            println!("{}", fx.root.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
