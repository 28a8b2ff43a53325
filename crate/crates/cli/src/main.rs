use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entropot::io::{emit_json, oracle_file, solve_file, ProblemFile};
use entropot::{run_experiment, write_outputs, AlgoChoice, BenchError, Dataset, ExperimentSpec};

#[derive(Debug, Parser)]
#[command(name = "entropot", version, about = "Entropic optimal transport solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run solvers on pairs of image histograms and write CSV, JSON and SVG results.
    Bench(BenchArgs),
    /// Solve one problem file with a given gamma and delta.
    Solve {
        input: PathBuf,
        #[arg(long, default_value = "sinkhorn")]
        algo: AlgoChoice,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the exact optimal transport plan of a problem file.
    Oracle {
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    #[arg(long, default_value = "synthetic")]
    dataset: Dataset,
    /// One or more algorithms, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sinkhorn")]
    algo: Vec<AlgoChoice>,
    /// Target accuracies, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    eps: Vec<f64>,
    /// Interpret each epsilon as a multiple of the largest pixel distance.
    #[arg(long)]
    relative_eps: bool,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image side length after downsampling (n = side²).
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mnist_path: Option<PathBuf>,
    /// Fraction of foreground pixels in synthetic images.
    #[arg(long, default_value_t = 0.2)]
    foreground: f64,
    #[arg(long)]
    no_invariants: bool,
    #[arg(long)]
    no_oracle: bool,
    /// Skip the per-iteration rounded-cost curves.
    #[arg(long)]
    no_curves: bool,
    /// Largest n for which invariant monitors compute a high-accuracy reference optimum.
    #[arg(long, default_value_t = entropot::experiment::REFERENCE_MAX_N)]
    reference_max_n: usize,
}

fn bench(args: BenchArgs) -> entropot::Result<()> {
    let side = args.side.unwrap_or(match args.dataset {
        Dataset::Mnist => 16,
        Dataset::Synthetic => 20,
    });
    let spec = ExperimentSpec {
        dataset: args.dataset,
        algorithms: args.algo,
        epsilons: args.eps,
        relative_eps: args.relative_eps,
        trials: args.trials,
        seed: args.seed,
        side,
        mnist_path: args.mnist_path,
        foreground_fraction: args.foreground,
        invariants: !args.no_invariants,
        oracle: !args.no_oracle,
        curves: !args.no_curves,
        reference_max_n: args.reference_max_n,
    };
    let outcome = run_experiment(&spec)?;
    let files = write_outputs(&outcome, &args.out)?;
    eprintln!(
        "{} runs written to {}",
        outcome.cells.len(),
        files.summary.display()
    );
    match outcome.total_violations() {
        0 => Ok(()),
        failures => Err(BenchError::Invariants {
            failures,
            report: files.invariants,
        }),
    }
}

fn run(cli: Cli) -> entropot::Result<()> {
    match cli.command {
        Command::Bench(args) => bench(args),
        Command::Solve {
            input,
            algo,
            max_iterations,
            out,
        } => {
            let file = ProblemFile::read(&input)?;
            emit_json(&solve_file(&file, algo, max_iterations)?, out.as_deref())
        }
        Command::Oracle { input, out } => {
            let file = ProblemFile::read(&input)?;
            emit_json(&oracle_file(&file)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Exit code 2 is reserved for invariant violations.
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
