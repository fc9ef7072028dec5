use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcprox::rates::{
    rate_essentially_cyclic, rate_randomized, rate_randomized_optimal, rate_shuffled_cyclic, RateInputs,
};
use bcprox_bench::config::{Family, RunConfig};
use bcprox_bench::error::{BenchError, Result};
use bcprox_bench::runner::run_experiment;
use bcprox_bench::verify::{verify_rates, VerifyConfig};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "bcprox",
    version,
    about = "Block-coordinate proximal methods: solvers, benchmarks and rate checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the configured one).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record every k-th iteration.
    #[arg(long)]
    trace_every: Option<usize>,
    /// Also write an SVG chart per run.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generic block-coordinate forward-backward runs.
    SolveBc(RunArgs),
    /// Finito/MISO runs on a finite-sum instance.
    SolveFinito(RunArgs),
    /// Incremental sharing runs.
    SolveSharing(RunArgs),
    /// Accelerated runs on a quadratic instance.
    SolveAccel(RunArgs),
    /// Rate constants for the rate inputs in a JSON file (or stdin).
    Rates {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Every seed and sampler of a configuration, whatever its family.
    Bench(RunArgs),
    /// Monte-Carlo check of a rate constant; exits with status 2 on FAIL.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RatesOutput {
    inputs: RateInputs,
    randomized: std::result::Result<f64, String>,
    optimal: std::result::Result<bcprox::rates::OptimalRate, String>,
    essentially_cyclic: std::result::Result<f64, String>,
    shuffled_cyclic: std::result::Result<f64, String>,
}

fn run(args: &RunArgs, family: Option<Family>) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(f) = family {
        if cfg.problem.family != f {
            return Err(BenchError::Config(format!(
                "this subcommand needs family {:?}, the config has {:?}",
                f.label(),
                cfg.problem.family.label()
            )));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(t) = args.trace_every {
        cfg.solver.trace_every = t;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output.clone());
    let summary = run_experiment(&cfg, &out, args.plot)?;
    let failed = summary.runs.iter().filter(|r| r.error.is_some()).count();
    for r in &summary.runs {
        match &r.error {
            Some(e) => println!("seed {} {}: error: {e}", r.seed, r.sampler),
            None => println!(
                "seed {} {}: {} after {} iterations, residual {:.3e}",
                r.seed,
                r.sampler,
                r.status,
                r.iterations.unwrap_or(0),
                r.final_residual.unwrap_or(f64::NAN)
            ),
        }
    }
    println!(
        "wrote {} runs ({failed} failed) to {}",
        summary.runs.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn rates(config: Option<&Path>) -> Result<ExitCode> {
    let text = match config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| BenchError::Io { path: p.into(), source })?,
        None => {
            let mut s = String::new();
            std::io::stdin()
                .read_to_string(&mut s)
                .map_err(|source| BenchError::Io {
                    path: "<stdin>".into(),
                    source,
                })?;
            s
        }
    };
    let inputs: RateInputs = serde_json::from_str(&text)?;
    let out = RatesOutput {
        randomized: rate_randomized(&inputs).map_err(|e| e.to_string()),
        optimal: rate_randomized_optimal(inputs.n_blocks, &inputs.lipschitz, &inputs.strong_convexity)
            .map_err(|e| e.to_string()),
        essentially_cyclic: rate_essentially_cyclic(&inputs).map_err(|e| e.to_string()),
        shuffled_cyclic: rate_shuffled_cyclic(&inputs).map_err(|e| e.to_string()),
        inputs,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(ExitCode::SUCCESS)
}

fn verify(config: &Path, out: Option<&Path>) -> Result<ExitCode> {
    let cfg = VerifyConfig::load(config)?;
    let report = verify_rates(&cfg)?;
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| BenchError::Io {
                path: dir.into(),
                source,
            })?;
            let path = dir.join("verify.json");
            std::fs::write(&path, json).map_err(|source| BenchError::Io { path, source })?;
        }
        None => print!("{json}"),
    }
    println!(
        "{}: c = {:.6e}, worst ratio {:.4} at k = {}",
        if report.pass { "PASS" } else { "FAIL" },
        report.c_used,
        report.worst_ratio,
        report.worst_at
    );
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SolveBc(a) => run(a, Some(Family::GenericBc)),
        Command::SolveFinito(a) => run(a, Some(Family::FiniteSum)),
        Command::SolveSharing(a) => run(a, Some(Family::Sharing)),
        Command::SolveAccel(a) => run(a, Some(Family::Accel)),
        Command::Bench(a) => run(a, None),
        Command::Rates { config } => rates(config.as_deref()),
        Command::Verify { config, out } => verify(config, out.as_deref()),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::FAILURE
    })
}
