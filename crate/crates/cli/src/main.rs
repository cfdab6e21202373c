//! `nlos`: simulate captures, build periodograms, fit clutter models and run
//! NLOS detection from a TOML configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "nlos",
    version,
    about = "NLOS sensing with TDD-gapped OFDM CSI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `outputs.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a measurement run and write the capture plus ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Capture path; defaults to `<out>/capture.isac`.
        #[arg(long)]
        capture: Option<PathBuf>,
    },
    /// Periodograms and SNR table of the configured (K, J) pairs.
    Process {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capture: PathBuf,
    },
    /// Windowed detection with region split, truth matching and rates.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capture: PathBuf,
        /// Clutter model from `fit-clutter`.
        #[arg(long)]
        clutter: Option<PathBuf>,
        /// Truth CSV; defaults to the file written next to the capture.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Speed point-spread function of the TDD pattern.
    Psf {
        #[command(flatten)]
        common: Common,
    },
    /// Fit a clutter subspace from a target-free capture or simulated calibration run.
    FitClutter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        capture: Option<PathBuf>,
    },
}

fn context(common: &Common) -> Result<Context, CliError> {
    let config = RunConfig::load(common.config.as_deref())?;
    Ok(Context {
        seed: common.seed.unwrap_or(config.seed),
        out: common
            .out
            .clone()
            .unwrap_or_else(|| config.outputs.dir.clone()),
        config,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, capture } => {
            let ctx = context(&common)?;
            let s = commands::simulate(&ctx, capture.as_deref())?;
            println!("frames={}", s.frames);
            println!("capture={}", s.capture.display());
            println!("truth={}", s.truth.display());
        }
        Command::Process { common, capture } => {
            let ctx = context(&common)?;
            println!("K,J,M_symbols,SNR_dB");
            for r in commands::process(&ctx, &capture)? {
                println!(
                    "{},{},{},{:.2}",
                    r.frames, r.decimation, r.symbols, r.snr_db
                );
            }
        }
        Command::Detect {
            common,
            capture,
            clutter,
            truth,
        } => {
            let ctx = context(&common)?;
            let s = commands::detect(&ctx, &capture, truth.as_deref(), clutter.as_deref())?;
            if !s.clutter_applied {
                eprintln!("warning: no clutter model supplied");
            }
            println!("windows={}", s.windows);
            println!("overall_rate={:.4}", s.overall_rate);
            println!("moving_rate={:.4}", s.moving_rate);
        }
        Command::Psf { common } => {
            let ctx = context(&common)?;
            println!("replica_spacing_mps={}", commands::psf(&ctx)?);
        }
        Command::FitClutter { common, capture } => {
            let ctx = context(&common)?;
            let s = commands::fit_clutter_cmd(&ctx, capture.as_deref())?;
            println!("rank={}", s.rank);
            println!("dim={}", s.dim);
            match s.wall_estimate {
                Some(d) => println!("d_wall_estimate_m={d:.3}"),
                None => println!("d_wall_estimate_m=none"),
            }
            println!("model={}", s.path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nlos: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
