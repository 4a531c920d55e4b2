use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ctoqw",
    version,
    about = "Continuous-time open quantum walks: evolution, trajectories, first passage and classification"
)]
pub struct Cli {
    /// Master seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel estimation (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Convergence tolerance of the first-passage series.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol: f64,

    /// Emit log lines on stderr as JSON objects.
    #[arg(long, global = true)]
    pub json_logs: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural invariants of a model file.
    Validate(ValidateArgs),
    /// Apply the semigroup to a block state.
    Evolve(EvolveArgs),
    /// Monte Carlo estimates from quantum trajectories.
    Simulate(SimulateArgs),
    /// First-passage map and reach probability between two vertices.
    FirstPassage(PassageArgs),
    /// Expected time spent at a vertex.
    Occupation(PassageArgs),
    /// Recurrence trichotomy at a base vertex.
    Classify(ClassifyArgs),
    /// Irreducibility of the semigroup or of the discrete jump map.
    Irreducible(IrreducibleArgs),
    /// Print a built-in model file.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Truncation window for lattice models.
    #[arg(long)]
    pub window: Option<i64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("initial").required(true).args(["state", "start"])))]
pub struct EvolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub window: Option<i64>,
    /// Block state file.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Localized start `vertex:state`, e.g. `1:e2`.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub t: f64,
    /// Evolved state file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Position law on a time grid over `[0, t]`.
    #[arg(long, value_enum)]
    pub report: Option<ReportFormat>,
    /// Number of grid intervals for `--report`.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Destination of the `--report` table; stdout when absent.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub window: Option<i64>,
    /// Localized start `vertex:state`.
    #[arg(long)]
    pub start: String,
    /// Simulation horizon; `inf` runs every trajectory until it stops.
    #[arg(long)]
    pub horizon: f64,
    /// Number of trajectories.
    #[arg(long)]
    pub n: usize,
    /// Query list (JSON array); defaults to the position law at the horizon.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Estimate table; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every jump of every trajectory to this file.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PassageArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Start `vertex:state`.
    #[arg(long)]
    pub from: String,
    /// Target vertex.
    #[arg(long)]
    pub to: String,
    /// Lattice window; repeat for a convergence study. The last one is reported in full.
    #[arg(long)]
    pub window: Vec<i64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Base vertex; defaults to the first vertex of the model.
    #[arg(long)]
    pub vertex: Option<String>,
    /// Spectral tolerance separating the three cases.
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Lattice window; repeat for a convergence study. The last one is reported in full.
    #[arg(long)]
    pub window: Vec<i64>,
    /// Also classify at every vertex and report the case of the whole walk.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IrreducibleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub window: Option<i64>,
    /// Test the discrete jump map instead of the semigroup.
    #[arg(long)]
    pub discrete: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// One of ex2.6, ex3.4.1, ex3.4.2, ex3.4.3.
    #[arg(long)]
    pub name: String,
    /// Window of the lattice fixtures.
    #[arg(long, default_value_t = oqw_core::fixtures::DEFAULT_WINDOW)]
    pub window: i64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
