use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use smoothopt::harness::bench::{bench_polygon, BenchOptions};
use smoothopt::harness::registry::{instance, problem_names};
use smoothopt::harness::run::{execute, load, Row};
use smoothopt::harness::validate::{run_suite, Suite, ValidateOptions};
use smoothopt::harness::HarnessError;
use smoothopt::optimizer::{estimate_lipschitz, LIPSCHITZ_SAMPLES};
use smoothopt::problems::DiameterPenalty;
use smoothopt::rng::Stream;

#[derive(Parser)]
#[command(name = "smoothopt", version, about = "Successive stochastic smoothing optimizer")]
struct Cli {
    /// Worker threads (also capped by SMOOTHOPT_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute every seed of a run configuration.
    Run {
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a statistical validation suite.
    Validate {
        #[arg(value_enum)]
        suite: SuiteArg,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Reduced sample counts.
        #[arg(long)]
        quick: bool,
        /// Iterations at which the rate suite checks its bound.
        #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10000])]
        times: Vec<usize>,
    },
    /// Benchmark presets.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
    /// Estimate the Lipschitz constant of a registered problem.
    EstimateLipschitz {
        problem: String,
        #[arg(long)]
        n: usize,
        /// Scale of the difference quotients (default: half the region diameter).
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, default_value_t = LIPSCHITZ_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Largest small polygon.
    Polygon {
        #[arg(long)]
        n: usize,
        /// Use the reference evaluation counts instead of desk-scale budgets.
        #[arg(long)]
        full_budget: bool,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Gradient,
    Moments,
    Rate,
    Penalty,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Gradient => Suite::Gradient,
            SuiteArg::Moments => Suite::Moments,
            SuiteArg::Rate => Suite::Rate,
            SuiteArg::Penalty => Suite::Penalty,
        }
    }
}

fn print_rows(rows: &[Row]) {
    println!("{:>10} {:>5} {:>8} {:>12} {:>14} {:>12}", "problem", "n", "seed", "Func. calc.", "Max. achived", "Ideal value");
    for r in rows {
        let ideal = r.ideal.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!("{:>10} {:>5} {:>8} {:>12} {:>14.4} {:>12}", r.problem, r.n, r.seed, r.evaluations, r.best, ideal);
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, output } => {
            let mut prepared = load(&config)?;
            if let Some(out) = output {
                prepared.output = out;
            }
            let summary = execute(&prepared, cli.threads)?;
            print_rows(&summary.rows);
            println!("summary: {}", summary.summary.display());
        }
        Command::Validate { suite, seed, quick, times } => {
            let opts = ValidateOptions { seed, quick, rate_times: times };
            let report = run_suite(suite.into(), &opts)?;
            for check in &report.checks {
                println!("{check}");
            }
            report.status()?;
        }
        Command::Bench { which: BenchCommand::Polygon { n, full_budget, runs, master_seed, output } } => {
            let opts = BenchOptions { n, full_budget, runs, master_seed };
            let output = output.unwrap_or_else(|| PathBuf::from(format!("bench-out/polygon-n{n}")));
            let summary = bench_polygon(&opts, &output, cli.threads)?;
            print_rows(&summary.rows);
            println!("summary: {}", summary.summary.display());
        }
        Command::EstimateLipschitz { problem, n, scale, samples, seed } => {
            let inst = instance(&problem, n, DiameterPenalty::default(), None, None, None).map_err(|e| {
                HarnessError::InvalidParameters(format!("{} (known problems: {})", e.message, problem_names().join(", ")))
            })?;
            let scale = scale.unwrap_or_else(|| 0.5 * inst.region.diameter().expect("bounded region"));
            let l = estimate_lipschitz(&*inst.objective, &inst.region, scale, samples, Stream::new(seed, 0))
                .map_err(|e| HarnessError::InvalidParameters(e.to_string()))
                .context("estimating the Lipschitz constant")?;
            println!("{l}");
            if let Some(known) = inst.lipschitz {
                println!("known constant used by the harness: {known}");
            }
        }
    }
    Ok(())
}

/// The error chain joined by ": ", skipping causes the previous message already quotes.
fn chain_message(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", chain_message(&err));
            let code = err.downcast_ref::<HarnessError>().map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
