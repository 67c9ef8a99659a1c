//! `sonar-tbd`: simulate, detect, track and evaluate active sonar data.

mod commands;
mod error;
mod manifest;
mod pcm;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Common, TrackArgs};
use crate::error::CliResult;

/// Log filter variable, e.g. `SONAR_TBD_LOG=debug`.
const LOG_ENV: &str = "SONAR_TBD_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "sonar-tbd",
    version,
    about = "Active sonar track-before-detect pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed of the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl From<&CommonArgs> for Common {
    fn from(a: &CommonArgs) -> Self {
        Common {
            config: a.config.clone(),
            out: a.out.clone(),
            seed: a.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario and write one angle-distance matrix per emission.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Detect and track on matrix files, or on a live simulation.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of matrix files written by `simulate` or `ingest`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Score the tracks against the config's ground truth (always on for
        /// live simulation).
        #[arg(long)]
        score: bool,
        /// Also export the binary detection maps.
        #[arg(long)]
        maps: bool,
    },
    /// Beamform a header-less interleaved 16-bit PCM recording.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// Recording; channel count and sample rate come from the config.
        #[arg(long)]
        pcm: PathBuf,
    },
    /// Monte Carlo sweep over P_fa, N_c or scr_db.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid such as `P_fa=0.1,0.01,0.001`.
        #[arg(long)]
        sweep: String,
        /// Number of consecutive seeds starting at the scenario seed.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
    /// Time the processing stages.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Emissions to time.
        #[arg(long, default_value_t = 5)]
        emissions: usize,
    },
}

fn dispatch(command: &Command) -> CliResult<()> {
    match command {
        Command::Simulate { common } => commands::simulate(&common.into()).map(drop),
        Command::Track {
            common,
            input,
            score,
            maps,
        } => commands::track(
            &common.into(),
            &TrackArgs {
                input: input.clone(),
                score: *score,
                maps: *maps,
            },
        )
        .map(drop),
        Command::Ingest { common, pcm } => commands::ingest(&common.into(), pcm).map(drop),
        Command::Sweep {
            common,
            sweep,
            seeds,
        } => commands::sweep(&common.into(), sweep, *seeds),
        Command::Bench { common, emissions } => commands::bench(&common.into(), *emissions),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
