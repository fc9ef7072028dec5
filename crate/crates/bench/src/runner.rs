//! Experiment fan-out: every seed × sampler pair gets its own trace CSV, and
//! one `summary.json` collects per-run results. Seeds run on a worker pool;
//! each worker owns its instance and solver state and writes its own files.

use std::path::Path;

use bcprox::accel::{solve_accel, AccelConfig};
use bcprox::bc::{solve_bc, BcSolverConfig, SolverStatus, TraceRow, DESCENT_SLACK};
use bcprox::incremental::{solve_finito, solve_sharing};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SamplerChoice, SolverParams, CONFIG_VERSION};
use crate::error::{io_err, BenchError, Result};
use crate::fit::log_linear_fit;
use crate::generate::{generate_problem, Generated, GroundTruth, Instance};
use crate::plot::write_trace_svg;
use crate::trace_csv::write_trace_file;

/// Caps the size of the worker pool.
pub const THREADS_ENV: &str = "BCPROX_THREADS";

/// FBE gaps at or below `GAP_FLOOR (1 + |min Phi|)` are treated as converged
/// and left out of the contraction fit.
pub const GAP_FLOOR: f64 = 1e-12;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub sampler: String,
    pub sampler_index: usize,
    pub csv: Option<String>,
    pub status: String,
    pub iterations: Option<usize>,
    pub final_fbe: Option<f64>,
    pub final_residual: Option<f64>,
    /// `None` for accelerated runs, whose envelope values need not decrease.
    pub fbe_monotone: Option<bool>,
    pub contraction_factor: Option<f64>,
    pub r_squared: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub ground_truth: Option<GroundTruth>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: u32,
    pub family: String,
    pub seeds: Vec<SeedRecord>,
    pub runs: Vec<RunRecord>,
}

/// Trace and status of one solver run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    pub status: SolverStatus,
    pub iterations: usize,
}

pub fn status_label(s: SolverStatus) -> String {
    match s {
        SolverStatus::Converged => "converged".into(),
        SolverStatus::MaxIters => "max_iters".into(),
        SolverStatus::DescentViolation { iteration } => format!("descent_violation@{iteration}"),
    }
}

/// Runs the solver matching the instance family with one sampler.
pub fn execute(gen: &Generated, choice: &SamplerChoice, seed: u64, params: &SolverParams) -> Result<RunOutput> {
    let n = gen.n_blocks();
    let mut out = if let Instance::Accel(p) = &gen.instance {
        if *choice != SamplerChoice::Uniform {
            return Err(bcprox::Error::Unsupported("the accelerated method samples uniformly".into()).into());
        }
        let mut cfg = AccelConfig::new(gen.step.clone(), seed, params.max_iters);
        cfg.tol_residual = params.tol_residual;
        cfg.trace_every = params.trace_every;
        let o = solve_accel(p, gen.x0.clone(), &cfg)?;
        RunOutput {
            rows: o.trace.rows,
            status: o.status,
            iterations: o.iterations,
        }
    } else {
        let mut cfg = BcSolverConfig::new(gen.step.clone(), choice.resolve(n, seed)?, params.max_iters);
        cfg.tol_residual = params.tol_residual;
        cfg.trace_every = params.trace_every;
        cfg.check_descent = params.check_descent;
        let (trace, status, iterations) = match &gen.instance {
            Instance::FiniteSum(fp) => {
                let o = solve_finito(fp, gen.x0.block(0), &cfg)?;
                (o.trace, o.status, o.iterations)
            }
            Instance::Sharing(sp) => {
                let o = solve_sharing(sp, &gen.x0, &cfg)?;
                (o.trace, o.status, o.iterations)
            }
            Instance::Generic(p) => {
                let o = solve_bc(p, gen.x0.clone(), &cfg)?;
                (o.trace, o.status, o.iterations)
            }
            Instance::Accel(_) => unreachable!("handled above"),
        };
        RunOutput {
            rows: trace.rows,
            status,
            iterations,
        }
    };
    if !params.record_wall_time {
        out.rows.iter_mut().for_each(|r| r.wall_ns = 0);
    }
    Ok(out)
}

/// Whether consecutive FBE values never rise by more than `1e-8 (1 + |phi|)`.
pub fn fbe_nonincreasing(rows: &[TraceRow]) -> bool {
    rows.windows(2)
        .all(|w| w[1].fbe <= w[0].fbe + DESCENT_SLACK * (1.0 + w[0].fbe.abs()))
}

/// Log-linear fit of `fbe - min_phi` over the rows above the gap floor.
pub fn contraction_fit(rows: &[TraceRow], min_phi: f64) -> Option<crate::fit::LogLinearFit> {
    let floor = GAP_FLOOR * (1.0 + min_phi.abs());
    let (ks, gaps): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|r| (r.k as f64, r.fbe - min_phi))
        .filter(|(_, g)| *g > floor)
        .unzip();
    log_linear_fit(&ks, &gaps)
}

pub fn csv_name(seed: u64, index: usize, choice: &SamplerChoice) -> String {
    format!("seed{seed}_{index}_{}.csv", choice.label())
}

/// Worker pool of `BCPROX_THREADS` threads, or rayon's default size.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| BenchError::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| BenchError::Config(e.to_string()))
}

fn run_seed(cfg: &RunConfig, seed: u64, out_dir: &Path, plot: bool) -> (SeedRecord, Vec<RunRecord>) {
    let failed = |msg: String| RunRecord {
        seed,
        sampler: String::new(),
        sampler_index: 0,
        csv: None,
        status: "error".into(),
        iterations: None,
        final_fbe: None,
        final_residual: None,
        fbe_monotone: None,
        contraction_factor: None,
        r_squared: None,
        error: Some(msg),
    };
    let gen = match generate_problem(&cfg.problem, seed) {
        Ok(g) => g,
        Err(e) => {
            let runs = cfg
                .samplers
                .iter()
                .enumerate()
                .map(|(j, c)| RunRecord {
                    sampler: c.label().into(),
                    sampler_index: j,
                    ..failed(e.to_string())
                })
                .collect();
            return (
                SeedRecord {
                    seed,
                    ground_truth: None,
                    error: Some(e.to_string()),
                },
                runs,
            );
        }
    };
    let (truth, truth_err) = if cfg.solver.ground_truth {
        match gen.ground_truth() {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let accel = matches!(gen.instance, Instance::Accel(_));
    let runs = cfg
        .samplers
        .iter()
        .enumerate()
        .map(|(j, choice)| {
            let base = RunRecord {
                sampler: choice.label().into(),
                sampler_index: j,
                ..failed(String::new())
            };
            let out = match execute(&gen, choice, seed, &cfg.solver) {
                Ok(o) => o,
                Err(e) => {
                    return RunRecord {
                        error: Some(e.to_string()),
                        ..base
                    }
                }
            };
            let name = csv_name(seed, j, choice);
            if let Err(e) = write_trace_file(&out_dir.join(&name), &out.rows) {
                return RunRecord {
                    error: Some(e.to_string()),
                    ..base
                };
            }
            let last = out.rows.last();
            let fit = truth.as_ref().and_then(|t| contraction_fit(&out.rows, t.min_phi));
            if plot {
                let floor = truth.as_ref().map_or(0.0, |t| t.min_phi);
                let svg = out_dir.join(name.replace(".csv", ".svg"));
                // Plotting is best effort and never fails a run.
                let _ = write_trace_svg(&svg, &format!("seed {seed}, {}", choice.label()), &out.rows, floor);
            }
            RunRecord {
                csv: Some(name),
                status: status_label(out.status),
                iterations: Some(out.iterations),
                final_fbe: last.map(|r| r.fbe),
                final_residual: last.map(|r| r.residual),
                fbe_monotone: (!accel).then(|| fbe_nonincreasing(&out.rows)),
                contraction_factor: fit.map(|f| f.factor),
                r_squared: fit.map(|f| f.r_squared),
                error: None,
                ..base
            }
        })
        .collect();
    (
        SeedRecord {
            seed,
            ground_truth: truth,
            error: truth_err,
        },
        runs,
    )
}

/// Runs every seed × sampler pair of `cfg`, writing CSVs and the summary to
/// `out_dir`. Per-run failures are recorded, not propagated.
pub fn run_experiment(cfg: &RunConfig, out_dir: &Path, plot: bool) -> Result<Summary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let pool = thread_pool()?;
    let per_seed: Vec<(SeedRecord, Vec<RunRecord>)> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s, out_dir, plot)).collect());
    let mut summary = Summary {
        version: CONFIG_VERSION,
        family: cfg.problem.family.label().into(),
        seeds: Vec::with_capacity(per_seed.len()),
        runs: Vec::new(),
    };
    for (s, runs) in per_seed {
        summary.seeds.push(s);
        summary.runs.extend(runs);
    }
    let path = out_dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}
