use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nnreach", version, about = "Interval reachability for neural networks and neural control loops")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Over-approximate the output set of a network over an input box.
    ReachNn(NnArgs),
    /// Run simulation-guided bisection and the uniform baseline side by side.
    ComparePartition(NnArgs),
    /// Compute the reachable tube of a closed loop.
    ReachNncs(LoopArgs),
    /// Compute the reachable tube and check the safety constraints on it.
    Verify(VerifyArgs),
    /// Simulate the closed loop from random initial states.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 1 is fully sequential [default: 1, or the run
    /// configuration's value].
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write wall-clock timings to timing.json.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    /// Network file (JSON).
    #[arg(long)]
    pub net: PathBuf,
    /// Input box as "lo,hi;lo,hi;...".
    #[arg(long, allow_hyphen_values = true)]
    pub input: String,
    /// Bisection tolerance.
    #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
    pub eps: f64,
    /// Number of simulations guiding the bisection.
    #[arg(long, default_value_t = 1000)]
    pub sims: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct LoopArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the plant model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Override the network file.
    #[arg(long)]
    pub net: Option<PathBuf>,
    /// Override the initial state box ("lo,hi;lo,hi;...").
    #[arg(long, allow_hyphen_values = true)]
    pub input: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub sims: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: LoopArgs,
    /// Safety specification file replacing the one in the configuration.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: LoopArgs,
    /// Number of trajectories.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Integration steps per substep.
    #[arg(long, default_value_t = 10)]
    pub refine: usize,
}
