use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "reluinv", version, about = "Globally optimal inverse design through ReLU surrogate networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a network at one input.
    Forward(ForwardArgs),
    /// Compute preactivation bounds and print the stability census.
    Bounds(BoundsArgs),
    /// Minimum-L1 inversion, optionally with integer designs.
    Invert(InvertArgs),
    /// Inversion with at most D nonzero inputs shared by all targets.
    Select(SelectArgs),
    /// Worst-case deviation of a design over an epsilon-box.
    Robust(RobustArgs),
    /// Branch-and-bound and the adjoint method run together.
    Hybrid(HybridArgs),
    /// Solve time against network depth and width on synthetic networks.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// Comma-separated input vector.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
    pub input: Vec<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct BoundArgs {
    /// Seconds per node subproblem when tightening bounds.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Worker threads for the subproblems of one layer.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Use interval arithmetic only.
    #[arg(long)]
    pub no_tighten: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    #[command(flatten)]
    pub bound: BoundArgs,
    /// Bounds cache file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct SolveArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long)]
    pub problem: PathBuf,
    /// Bounds cache; read when its key matches, written otherwise.
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub gap_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solution file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the MILP in LP text format.
    #[arg(long)]
    pub lp_dump: Option<PathBuf>,
    #[command(flatten)]
    pub bound: BoundArgs,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Treat every design input as an integer.
    #[arg(long)]
    pub integer: bool,
    /// Also solve the continuous relaxation, round it, and report both.
    #[arg(long)]
    pub round_compare: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Overrides the problem file's selection budget.
    #[arg(long)]
    pub budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RobustArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Solution file whose first design is examined; defaults to the
    /// problem file's robustness candidate.
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    /// Half-width of the perturbation box; defaults to the problem file's
    /// value, then 1e-3.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HybridArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Gap trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Hidden-layer counts for the depth sweep.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
    pub depths: Vec<usize>,
    /// Width used in the depth sweep.
    #[arg(long, default_value_t = 10)]
    pub depth_width: usize,
    /// Single-layer widths for the width sweep.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40")]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub inputs: usize,
    #[arg(long, default_value_t = 2)]
    pub outputs: usize,
    /// Networks per size.
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub bound: BoundArgs,
    /// CSV output; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
