//! Library side of the `lrt` command: argument grammar, run configuration
//! and the subcommands, callable in-process.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lrt", version, about = "Low-rank video restoration and segmentation data tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Restore a frame sequence listed in a manifest.
    Derain(DerainArgs),
    /// Generate a clean procedural sequence and a degraded copy.
    Synth(SynthArgs),
    /// Score restored frames against ground truth (PSNR, SSIM).
    EvalDerain(EvalDerainArgs),
    /// Score label maps against ground truth (per-class IoU, mIoU).
    EvalSeg(EvalSegArgs),
    /// Run the segmentation preprocessing chain over image/label pairs.
    Prep(PrepArgs),
}

/// Options shared by commands that read a run configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DerainArgs {
    /// Manifest listing input frames, one path per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub frames: usize,
    /// Frame size as WIDTHxHEIGHT.
    #[arg(long)]
    pub size: String,
    /// Gaussian noise standard deviation on the [0, 1] scale.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Horizontal scene motion, pixels per frame.
    #[arg(long, default_value_t = 1.0)]
    pub motion: f64,
    /// 1 for grayscale, 3 for color.
    #[arg(long, default_value_t = 1)]
    pub channels: usize,
    /// Streaks per 1000 pixels.
    #[arg(long)]
    pub rain_density: Option<f64>,
    #[arg(long)]
    pub rain_length: Option<f64>,
    #[arg(long)]
    pub rain_angle: Option<f64>,
    #[arg(long)]
    pub rain_intensity: Option<f64>,
    #[arg(long)]
    pub rain_jitter: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalDerainArgs {
    #[arg(long)]
    pub restored: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalSegArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub classes: usize,
    #[arg(long, default_value_t = lrt_core::IGNORE_ID)]
    pub ignore: u8,
}

#[derive(Debug, Clone, Args)]
pub struct PrepArgs {
    /// Manifest of `image label` path pairs, one pair per line.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    let result = match cli.command {
        Command::Derain(a) => commands::derain(&a, out),
        Command::Synth(a) => commands::synth(&a, out),
        Command::EvalDerain(a) => commands::eval_derain(&a, out),
        Command::EvalSeg(a) => commands::eval_seg(&a, out),
        Command::Prep(a) => commands::prep(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
