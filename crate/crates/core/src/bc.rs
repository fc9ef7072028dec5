//! The general block-coordinate forward-backward scheme.
//!
//! Each iteration computes `z^k in T(x^k)`, samples `I^{k+1}` and copies
//! `z_i^k` into `x_i^{k+1}` for `i in I^{k+1}`. The FBE at `x^k` falls out of
//! the same prox call, so monitoring it costs one extra evaluation of `F`
//! and `G` per iteration.

use std::time::Instant;

use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::fbe::{fbe_value, FbeReport};
use crate::problem::{Problem, SmoothBlock, Stepsize};
use crate::sampling::{IndexSet, SamplerSpec, SamplerState};

/// Relative slack of the sure-descent check: `1e-8 (1 + |phi(x^k)|)`.
pub const DESCENT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct BcSolverConfig {
    pub step: Stepsize,
    pub sampler: SamplerSpec,
    pub max_iters: usize,
    /// Stop once `||x^k - z^k||_{Gamma^{-1}} <= tol_residual`.
    pub tol_residual: f64,
    /// Record every `trace_every`-th iteration (plus the last one).
    pub trace_every: usize,
    /// Abort with [`SolverStatus::DescentViolation`] if the sure-descent
    /// inequality fails.
    pub check_descent: bool,
}

impl BcSolverConfig {
    pub fn new(step: Stepsize, sampler: SamplerSpec, max_iters: usize) -> Self {
        Self {
            step,
            sampler,
            max_iters,
            tol_residual: 0.0,
            trace_every: 1,
            check_descent: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol_residual >= 0.0) {
            return Err(Error::Config("tol_residual must be nonnegative".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::Config("trace_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// One monitored iteration: `I^{k+1}` together with the state at `x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    /// `I^{k+1}`; empty on the final row.
    pub indices: Vec<usize>,
    pub fbe: f64,
    pub phi_z: f64,
    pub residual: f64,
    /// Nanoseconds since the start of the run.
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

impl SolverTrace {
    pub fn fbe_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.fbe)
    }

    /// Whether the recorded FBE values never increase by more than `slack`.
    pub fn is_fbe_nonincreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].fbe <= w[0].fbe + slack)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Converged,
    MaxIters,
    DescentViolation { iteration: usize },
}

#[derive(Debug, Clone)]
pub struct BcOutcome {
    /// `z^k` at termination.
    pub z: BlockVector,
    /// `x^k` at termination.
    pub x: BlockVector,
    pub report: FbeReport,
    pub trace: SolverTrace,
    pub status: SolverStatus,
    /// Number of completed updates.
    pub iterations: usize,
}

/// True iff `phi(x^{k+1}) <= phi(x^k) - sum_{i in I} xi_i / (2 gamma_i) ||z_i^k - x_i^k||^2`
/// up to a slack of `1e-8 (1 + |phi(x^k)|)`.
pub fn check_sure_descent(
    report_k: &FbeReport,
    report_k1: &FbeReport,
    x_k: &BlockVector,
    indices: &IndexSet,
    step: &Stepsize,
) -> bool {
    sure_descent_margin(report_k, report_k1, x_k, indices, step) >= -DESCENT_SLACK * (1.0 + report_k.fbe.abs())
}

/// `phi(x^k) - sum_{i in I} xi_i/(2 gamma_i) ||z_i^k - x_i^k||^2 - phi(x^{k+1})`.
pub fn sure_descent_margin(
    report_k: &FbeReport,
    report_k1: &FbeReport,
    x_k: &BlockVector,
    indices: &IndexSet,
    step: &Stepsize,
) -> f64 {
    let decrease: f64 = indices
        .as_slice()
        .iter()
        .map(|&i| {
            let d: f64 = report_k
                .z
                .block(i)
                .iter()
                .zip(x_k.block(i))
                .map(|(z, x)| (z - x) * (z - x))
                .sum();
            report_k.xi[i] / (2.0 * step.gamma(i)) * d
        })
        .sum();
    report_k.fbe - decrease - report_k1.fbe
}

/// Iterate-by-iterate driver, for callers that pick index sets themselves.
pub struct BcState<'p, S> {
    problem: &'p Problem<S>,
    step: Stepsize,
    x: BlockVector,
    report: FbeReport,
    k: usize,
}

impl<'p, S: SmoothBlock> BcState<'p, S> {
    pub fn new(problem: &'p Problem<S>, x0: BlockVector, step: Stepsize) -> Result<Self> {
        x0.ensure_conforms(&problem.structure)?;
        step.validate(problem)?;
        let report = fbe_value(problem, &x0, &step)?;
        if !report.fbe.is_finite() {
            return Err(Error::NonFiniteEnvelope { iteration: 0 });
        }
        Ok(Self {
            problem,
            step,
            x: x0,
            report,
            k: 0,
        })
    }

    pub fn x(&self) -> &BlockVector {
        &self.x
    }

    /// Report at the current `x^k` (holds `z^k`).
    pub fn report(&self) -> &FbeReport {
        &self.report
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn stepsize(&self) -> &Stepsize {
        &self.step
    }

    /// Applies `x_i^{k+1} = z_i^k` for `i in I` and returns the previous
    /// `(x^k, report_k)`.
    pub fn advance(&mut self, indices: &IndexSet) -> Result<(BlockVector, FbeReport)> {
        let mut x_new = self.x.clone();
        x_new.copy_blocks_from(&self.report.z, indices.as_slice());
        let report_new = fbe_value(self.problem, &x_new, &self.step)?;
        self.k += 1;
        if !report_new.fbe.is_finite() {
            return Err(Error::NonFiniteEnvelope { iteration: self.k });
        }
        let x_old = std::mem::replace(&mut self.x, x_new);
        let report_old = std::mem::replace(&mut self.report, report_new);
        Ok((x_old, report_old))
    }

    fn into_outcome(self, trace: SolverTrace, status: SolverStatus) -> BcOutcome {
        BcOutcome {
            z: self.report.z.clone(),
            x: self.x,
            report: self.report,
            trace,
            status,
            iterations: self.k,
        }
    }
}

/// Runs the block-coordinate scheme with the sampler described in `cfg`.
pub fn solve_bc<S: SmoothBlock>(p: &Problem<S>, x0: BlockVector, cfg: &BcSolverConfig) -> Result<BcOutcome> {
    let mut sampler = SamplerState::new(&cfg.sampler, p.n_blocks())?;
    solve_bc_with_sampler(p, x0, cfg, &mut sampler)
}

/// Like [`solve_bc`] but draws index sets from an existing sampler, whose
/// counter must be at zero.
pub fn solve_bc_with_sampler<S: SmoothBlock>(
    p: &Problem<S>,
    x0: BlockVector,
    cfg: &BcSolverConfig,
    sampler: &mut SamplerState,
) -> Result<BcOutcome> {
    cfg.validate()?;
    if sampler.n_blocks() != p.n_blocks() {
        return Err(Error::Config(
            "sampler and problem disagree on the number of blocks".into(),
        ));
    }
    let start = Instant::now();
    let elapsed = || start.elapsed().as_nanos() as u64;
    let mut state = BcState::new(p, x0, cfg.step.clone())?;
    let mut trace = SolverTrace::default();
    let mut status = SolverStatus::MaxIters;

    while state.k < cfg.max_iters {
        if state.report.residual <= cfg.tol_residual {
            status = SolverStatus::Converged;
            break;
        }
        let k = state.k;
        let indices = sampler.next_indices(k)?;
        let (x_old, report_old) = state.advance(&indices)?;
        if k % cfg.trace_every == 0 {
            trace.rows.push(TraceRow {
                k,
                indices: indices.as_slice().to_vec(),
                fbe: report_old.fbe,
                phi_z: report_old.phi_z,
                residual: report_old.residual,
                wall_ns: elapsed(),
            });
        }
        if cfg.check_descent && !check_sure_descent(&report_old, &state.report, &x_old, &indices, &cfg.step) {
            status = SolverStatus::DescentViolation { iteration: k };
            break;
        }
    }
    if status == SolverStatus::MaxIters && state.report.residual <= cfg.tol_residual {
        status = SolverStatus::Converged;
    }
    trace.rows.push(TraceRow {
        k: state.k,
        indices: Vec::new(),
        fbe: state.report.fbe,
        phi_z: state.report.phi_z,
        residual: state.report.residual,
        wall_ns: elapsed(),
    });
    Ok(state.into_outcome(trace, status))
}
