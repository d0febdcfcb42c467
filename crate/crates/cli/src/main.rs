//! `gwnet`: command-line front end. Every subcommand reads files, calls one
//! library routine and writes its result.
//!
//! Exit codes: 0 success, 1 invalid input or parameters (usage errors
//! included), 2 a solver or flow that stopped before converging. Results
//! are still written in the last case.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "gwnet", version, about = "Gromov-Wasserstein statistics on measure networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every randomized step; runs are deterministic given it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (or directory, for commands producing several files).
    /// Standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; tables default to csv, everything else to json.
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    /// Worker threads for independent pairs and trials.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Common {
    pub fn format_or(&self, default: OutFormat) -> OutFormat {
        self.format.unwrap_or(default)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Json,
    Csv,
}

/// Solver flags.
#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Extra random vertex starts; the lowest distortion wins.
    #[arg(long, default_value_t = 0)]
    pub restarts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_outer_iters: usize,
    /// Starting coupling of the first run.
    #[arg(long, value_enum, default_value_t = Init::Product)]
    pub init: Init,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Init {
    Product,
    /// North-west corner coupling (the diagonal on equal measures).
    Identity,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// GW distance and optimal coupling between two networks.
    Distance {
        a: PathBuf,
        b: PathBuf,
        /// Where to write the coupling file `{"matrix": .., "cost": ..}`.
        #[arg(long)]
        coupling_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Networks along the aligned geodesic between two networks.
    Geodesic {
        a: PathBuf,
        b: PathBuf,
        /// Number of evenly spaced parameters in [0, 1].
        #[arg(long, default_value_t = 5)]
        steps: usize,
        /// Mark nodes lighter than this fraction of the heaviest node.
        #[arg(long, default_value_t = 0.0)]
        mask_fraction: f64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Frechet mean of the networks in a directory.
    Mean {
        dir: PathBuf,
        /// Seed network file; defaults to the first member.
        #[arg(long, conflicts_with = "seed_size")]
        seed_net: Option<PathBuf>,
        /// Start from a random network of this size (drawn from --seed).
        #[arg(long)]
        seed_size: Option<usize>,
        /// Keep every iterate at the seed's size.
        #[arg(long)]
        compress: bool,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        /// Heavy-ball momentum coefficient.
        #[arg(long)]
        momentum: Option<f64>,
        /// CSV trace of (iter, loss, base_size, step).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Compressed representation of Y on the nodes of X.
    Compress {
        x: PathBuf,
        y: PathBuf,
        /// Emit the compressed average (X + v/2) instead of X + v.
        #[arg(long)]
        average: bool,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Weighted tangent PCA of a directory of networks at a base.
    Pca {
        dir: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long, default_value_t = 2)]
        components: usize,
        /// Comma-separated offsets s; emits exp(mean + s * component) for each.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Tangent feature matrix for external classifiers.
    Featurize {
        dir: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a stochastic block model network.
    SbmGen {
        #[command(flatten)]
        sbm: SbmArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Block-model compression experiment over consecutive seeds.
    SbmExperiment {
        #[command(flatten)]
        sbm: SbmArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 1)]
        runs: u64,
        /// Pass threshold on the max deviation.
        #[arg(long, default_value_t = 0.1)]
        tolerance: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Support sizes of solved couplings between random Gaussian pairs.
    SupportSweep {
        #[arg(long, value_delimiter = ',', default_values_t = vec![5, 10, 20, 40])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Frechet means of diagonal or antisymmetric variants over alpha.
    AsymSweep {
        #[arg(long, value_enum, default_value_t = Mode::Diagonal)]
        mode: Mode,
        /// Sizes of the two base networks.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 10])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        seeds: usize,
        #[arg(long)]
        symmetrize: bool,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
pub struct SbmArgs {
    /// Comma-separated block sizes.
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 20, 20, 20, 20])]
    pub blocks: Vec<usize>,
    /// JSON file with the B x B matrix of block means; defaults to
    /// 25 * ((i + 2j) mod 5) resized to the block count.
    #[arg(long)]
    pub means: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub variance: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum Mode {
    Diagonal,
    Antisymmetric,
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Done,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("warning: solver did not converge; results were written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> anyhow::Result<Status> {
    use commands::*;
    match command {
        Command::Distance { a, b, coupling_out, solver, common } => {
            setup(&common)?;
            distance(&a, &b, coupling_out.as_deref(), &solver, &common)
        }
        Command::Geodesic { a, b, steps, mask_fraction, solver, common } => {
            setup(&common)?;
            geodesic(&a, &b, steps, mask_fraction, &solver, &common)
        }
        Command::Mean { dir, seed_net, seed_size, compress, max_iters, momentum, trace, solver, common } => {
            setup(&common)?;
            let opts = MeanOpts { seed_net, seed_size, compress, max_iters, momentum, trace };
            mean(&dir, &opts, &solver, &common)
        }
        Command::Compress { x, y, average, solver, common } => {
            setup(&common)?;
            compress(&x, &y, average, &solver, &common)
        }
        Command::Pca { dir, base, components, grid, solver, common } => {
            setup(&common)?;
            pca(&dir, &base, components, &grid, &solver, &common)
        }
        Command::Featurize { dir, base, solver, common } => {
            setup(&common)?;
            featurize(&dir, &base, &solver, &common)
        }
        Command::SbmGen { sbm, common } => {
            setup(&common)?;
            sbm_gen(&sbm, &common)
        }
        Command::SbmExperiment { sbm, runs, tolerance, common } => {
            setup(&common)?;
            sbm_experiment(&sbm, runs, tolerance, &common)
        }
        Command::SupportSweep { sizes, trials, solver, common } => {
            setup(&common)?;
            support_sweep(&sizes, trials, &solver, &common)
        }
        Command::AsymSweep { mode, sizes, alphas, seeds, symmetrize, max_iters, common } => {
            setup(&common)?;
            let opts = AsymOpts { mode, sizes, alphas, seeds, symmetrize, max_iters };
            asym_sweep(&opts, &common)
        }
    }
}

fn setup(common: &Common) -> anyhow::Result<()> {
    if let Some(j) = common.jobs {
        anyhow::ensure!(j >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global()?;
    }
    Ok(())
}

fn render(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}
