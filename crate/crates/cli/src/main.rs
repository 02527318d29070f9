//! `pact`: token reduction and clustering over dumped activations.

mod cmd;
mod error;
mod io;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pact_core::dbdpc::CenterSelection;
use pact_core::pipeline::PositionMode;
use pact_core::reference::DpcDensity;
use pact_core::Metric;

use crate::error::{exit, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "pact", version, about = "Prune and cluster visual tokens")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write zero for every timing field so reports are byte-stable.
    #[arg(long, global = true)]
    no_timings: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduce one layer's visual tokens.
    Reduce(cmd::reduce::ReduceArgs),
    /// Run a single clustering algorithm on a point set.
    Cluster(cmd::cluster::ClusterArgs),
    /// Write a synthetic activation dump with planted clusters.
    Synth(cmd::synth::SynthArgs),
    /// Pick the reduction layer from per-layer key dumps.
    LayerSelect(cmd::layers::LayerSelectArgs),
    /// Compare DBDPC with reference clusterers on one key tensor.
    Compare(cmd::compare::CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Cosine,
    Euclidean,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Cosine => Metric::Cosine,
            MetricArg::Euclidean => Metric::Euclidean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Recursive,
    Iterative,
}

impl From<SelectionArg> for CenterSelection {
    fn from(s: SelectionArg) -> Self {
        match s {
            SelectionArg::Recursive => CenterSelection::Recursive,
            SelectionArg::Iterative => CenterSelection::Iterative,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PositionArg {
    Center,
    Mean,
}

impl From<PositionArg> for PositionMode {
    fn from(p: PositionArg) -> Self {
        match p {
            PositionArg::Center => PositionMode::Center,
            PositionArg::Mean => PositionMode::MeanOfMembers,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DensityArg {
    Gaussian,
    CutoffCount,
}

impl From<DensityArg> for DpcDensity {
    fn from(d: DensityArg) -> Self {
        match d {
            DensityArg::Gaussian => DpcDensity::Gaussian,
            DensityArg::CutoffCount => DpcDensity::CutoffCount,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Json,
    Text,
}

/// Output directory and stdout report format shared by writing commands.
#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Directory for output files (created if missing).
    #[arg(long)]
    out: PathBuf,

    /// Format of the summary printed to stdout.
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    report: ReportFormat,
}

pub struct Ctx {
    pub timings: bool,
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<i32> {
    init_threads(cli.threads)?;
    let ctx = Ctx {
        timings: !cli.no_timings,
    };
    match cli.command {
        Command::Reduce(a) => cmd::reduce::run(a, &ctx),
        Command::Cluster(a) => cmd::cluster::run(a, &ctx),
        Command::Synth(a) => cmd::synth::run(a, &ctx),
        Command::LayerSelect(a) => cmd::layers::run(a, &ctx),
        Command::Compare(a) => cmd::compare::run(a, &ctx),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on bad flags on its own
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    debug_assert!((exit::OK..=exit::INVALID).contains(&code));
    ExitCode::from(code as u8)
}
