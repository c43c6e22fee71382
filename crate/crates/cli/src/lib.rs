//! Command-line driver: dataset generation, training, single extensions and
//! sequence replays.

pub mod commands;
pub mod inputs;
pub mod operator;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use commands::run;
pub use operator::{NnCorrModel, OpKind};
pub use report::RunManifest;

/// Bad arguments or inputs; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        2
    } else {
        1
    }
}

#[derive(Debug, Parser)]
#[command(name = "meshmotion", version, about = "Mesh-motion extension operators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extend one boundary displacement to the whole mesh.
    Extend(ExtendArgs),
    /// Generate a snapshot dataset.
    Gen(GenArgs),
    /// Train a learned operator on a dataset.
    Train(TrainArgs),
    /// Apply an operator along the snapshots of a dataset and track quality.
    Replay(ReplayArgs),
}

#[derive(Debug, clap::Args)]
pub struct ExtendArgs {
    /// `coarse`, `benchmark:<0|1|2>` or a mesh JSON file.
    #[arg(long)]
    pub mesh: String,
    /// `zero`, `cantilever:<tip>`, `dataset:<dir>:<index>` or a boundary JSON file.
    #[arg(long)]
    pub g: String,
    /// harmonic, biharmonic, plaplace:<p>, elastic, hybrid[:<strategy>] or nncorr.
    #[arg(long)]
    pub op: String,
    /// Trained parameters (hybrid, nncorr).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Operator settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Neo-Hookean flap solves under the configured loads.
    Artificial,
    /// Cantilever bending family of growing amplitude.
    Synthetic,
}

#[derive(Debug, clap::Args)]
pub struct GenArgs {
    /// Generation settings JSON (load configurations, material, split).
    #[arg(long)]
    pub config: PathBuf,
    /// `coarse` or `benchmark:<0|1|2>`; files are accepted for `synthetic`.
    #[arg(long, default_value = "coarse")]
    pub mesh: String,
    #[arg(long, value_enum, default_value_t = GenKind::Artificial)]
    pub kind: GenKind,
    /// Seed of the random split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    Hybrid,
    Nncorr,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub kind: TrainKind,
    /// Dataset directory or manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Training settings JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initialization (and, for nncorr, shuffling) seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct ReplayArgs {
    /// Dataset directory or manifest; its snapshots are replayed in order.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub op: String,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
