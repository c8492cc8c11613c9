use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;
mod io;
mod report;

use config::{AblArgs, CommonArgs, Format, FppArgs, PgModeArg};
use jdpnet_core::aqualoss::Component;

#[derive(Parser)]
#[command(
    name = "jdpnet",
    version,
    about = "Underwater image enhancement and quality diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance one image or a directory of images.
    Enhance {
        /// Input image or directory of PNG/JPEG files.
        input: PathBuf,
        /// Output directory; created if missing.
        out_dir: PathBuf,
        /// Weight container directory for the full network.
        #[arg(
            long,
            value_name = "DIR",
            required_unless_present = "fpp_only",
            conflicts_with = "fpp_only"
        )]
        weights: Option<PathBuf>,
        /// Run only the classical post-processing stage on the input.
        #[arg(long)]
        fpp_only: bool,
        #[arg(long, value_enum, value_name = "MODE")]
        pg_mode: Option<PgModeArg>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        fpp: FppArgs,
    },
    /// Score a directory of images, optionally against references.
    Evaluate {
        test_dir: PathBuf,
        /// Reference directory; images pair by file stem.
        #[arg(long = "ref", value_name = "DIR")]
        reference: Option<PathBuf>,
        /// Comma-separated subset of psnr,ssim,uiqm,uciqe.
        #[arg(long, value_name = "LIST")]
        metrics: Option<String>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Report file; stdout when omitted.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        abl: AblArgs,
    },
    /// Finite-difference gradient diagnostics of the AbL components.
    Gradcheck {
        image: PathBuf,
        /// Component whose step consistency is checked.
        #[arg(long, default_value = "abl", value_name = "coi|si|cti|abl")]
        component: Component,
        /// Number of interior pixels to sample.
        #[arg(long, default_value_t = 64, value_name = "N")]
        samples: usize,
        /// Coarse step; the fine step is a tenth of it.
        #[arg(long, default_value_t = 1e-3, value_name = "F")]
        h: f64,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        abl: AblArgs,
    },
    /// Create or audit a weight container.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
    /// Print the AbL breakdown of one image as JSON.
    Stats {
        image: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        abl: AblArgs,
    },
}

#[derive(Subcommand)]
enum WeightsAction {
    /// Write He-initialized weights.
    Init {
        dir: PathBuf,
        #[arg(long, default_value_t = 0, value_name = "N")]
        seed: u64,
        /// Channel width C of the network.
        #[arg(long, visible_alias = "channel-width", default_value_t = jdpnet_core::jdpnet::DEFAULT_CHANNEL_WIDTH, value_name = "C")]
        width: usize,
    },
    /// List layers with checksums and validate every shape and bound.
    Inspect { dir: PathBuf },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Enhance {
            input,
            out_dir,
            weights,
            fpp_only: _,
            pg_mode,
            common,
            fpp,
        } => commands::enhance::run(&input, &out_dir, weights.as_deref(), pg_mode, &common, &fpp),
        Command::Evaluate {
            test_dir,
            reference,
            metrics,
            format,
            out,
            common,
            abl,
        } => commands::evaluate::run(commands::evaluate::Request {
            test_dir: &test_dir,
            reference: reference.as_deref(),
            metrics: metrics.as_deref(),
            format,
            out: out.as_deref(),
            common: &common,
            abl: &abl,
        }),
        Command::Gradcheck {
            image,
            component,
            samples,
            h,
            out,
            common,
            abl,
        } => commands::gradcheck::run(&image, component, samples, h, out.as_deref(), &common, &abl),
        Command::Weights { action } => match action {
            WeightsAction::Init { dir, seed, width } => commands::weights::init(&dir, seed, width),
            WeightsAction::Inspect { dir } => commands::weights::inspect(&dir),
        },
        Command::Stats { image, common, abl } => commands::stats::run(&image, &common, &abl),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
