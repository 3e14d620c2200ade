mod commands;
mod grid;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Learn discrete Lagrangians and their symmetries from trajectory data.
#[derive(Parser, Debug)]
#[command(name = "symdl", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a known system and write trajectory files.
    Generate(GenerateArgs),
    /// Train a network (and optionally symmetry generators) on trajectories.
    Train(TrainArgs),
    /// Integrate a checkpoint's discrete Lagrangian from initial data.
    Rollout(RolloutArgs),
    /// Recreate and extend trajectories, writing a report.
    Eval(EvalArgs),
    /// Tabulate inverse modified and VBEA Lagrangians on a grid.
    VbeaExport(VbeaExportArgs),
    /// Write a checkpoint holding the exact midpoint discretization of a system.
    Oracle(OracleArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Experiment config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub fine_dt: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p0: Option<Vec<f64>>,
    #[arg(long)]
    pub noise_var: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of trajectories with distinct seeded initial conditions.
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub ic_spread: Option<f64>,
    /// Validate and generate a short prefix without writing files.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, required_unless_present_any = ["print_config", "dry_run"])]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Dlnn,
    Symdlnn,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trajectory CSV files or directories of them; generated from the
    /// config when omitted.
    #[arg(long, num_args = 1..)]
    pub data: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_interval: Option<usize>,
    /// Resolve config, data and model and evaluate the initial loss only.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long, required_unless_present_any = ["print_config", "dry_run"])]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RolloutArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "p0")]
    pub q1: Option<Vec<f64>>,
    /// Initial momentum; `q1` is then solved from `(q0, p0)`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub p0: Option<Vec<f64>>,
    /// Take `q0, q1` from the first two points of a trajectory file.
    #[arg(long, conflicts_with_all = ["q0", "q1", "p0"])]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneratorArg {
    Learned,
    True,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityArg {
    Central,
    FivePoint,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, num_args = 1.., required_unless_present = "print_config")]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub n_extra: Option<usize>,
    #[arg(long, value_enum)]
    pub generator: Option<GeneratorArg>,
    /// System for the true-quantity columns; defaults to the checkpoint's
    /// or the data's recorded system.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long, value_enum)]
    pub velocity: Option<VelocityArg>,
    /// Longer ground truth for the prediction-phase error.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Report file, or a directory when several data files are given.
    #[arg(long, required_unless_present = "print_config")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VbeaExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated `lo:hi:count` per axis, positions first then
    /// velocities, e.g. `-1:1:5,0:0:1`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub system: String,
    #[arg(long)]
    pub dt: f64,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
