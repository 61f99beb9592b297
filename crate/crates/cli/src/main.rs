//! `panmix`: command-line front end for mixing, pseudo-labeling, losses,
//! evaluation, fusion, the synthetic lab, visualization and format
//! conversion.
//!
//! Exit codes: 0 success, 1 validation or usage error, 2 I/O error.

use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod files;
mod manifest;
mod report;

#[derive(Debug, Parser)]
#[command(name = "panmix", version, about = "Cross-domain panoptic mixing toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Global {
    /// Worker threads for per-image work (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Class catalog: `cityscapes16`, `lab`, or a JSON file.
    #[arg(long, global = true, default_value = "cityscapes16")]
    pub catalog: String,
}

impl Global {
    pub fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }

    /// Runs `f` inside a pool bounded by `--jobs`.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let threads = match self.jobs {
            Some(0) => anyhow::bail!("--jobs must be at least 1"),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(pool.install(f))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compose mixed training samples from source and target manifests.
    Mix(commands::mix::Args),
    /// Pseudo-labels and confidence-filtered instances from teacher outputs.
    Pseudo(commands::pseudo::Args),
    /// Finite-difference check of every loss gradient.
    LossCheck(commands::loss_check::Args),
    /// Similarity map and alignment loss against a prompt embedding bank.
    Cda(commands::cda::Args),
    /// Panoptic quality, mIoU and mask AP between two label directories.
    Eval(commands::eval::Args),
    /// Merge semantic and instance predictions into a panoptic label.
    Fuse(commands::fuse::Args),
    /// Synthetic training lab.
    #[command(subcommand)]
    Synth(commands::synth::Command),
    /// Overlay a panoptic label on its image.
    Viz(commands::viz::Args),
    /// Convert between instance JSON lines and panoptic PNGs.
    #[command(subcommand)]
    Convert(commands::convert::Command),
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Mix(a) => commands::mix::run(a, g),
        Command::Pseudo(a) => commands::pseudo::run(a, g),
        Command::LossCheck(a) => commands::loss_check::run(a, g),
        Command::Cda(a) => commands::cda::run(a, g),
        Command::Eval(a) => commands::eval::run(a, g),
        Command::Fuse(a) => commands::fuse::run(a, g),
        Command::Synth(c) => commands::synth::run(c, g),
        Command::Viz(a) => commands::viz::run(a, g),
        Command::Convert(c) => commands::convert::run(c, g),
    }
}

fn is_io(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<files::PathError>()
            || c.is::<std::io::Error>()
            || matches!(c.downcast_ref::<panmix::Error>(), Some(panmix::Error::Io(_)))
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_io(&e) { 2 } else { 1 })
        }
    }
}
