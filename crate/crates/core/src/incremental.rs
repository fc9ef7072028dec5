//! Incremental specializations of the block-coordinate scheme.
//!
//! * Finito/MISO: the consensus formulation `G = (1/N) sum g(x_i) + indicator_C`.
//!   Only the aggregate `hat s` enters the prox, so one iteration costs one
//!   small prox plus `|I|` gradients.
//! * Sharing: `G = g(sum_i x_i)`. The aggregate `tilde s` plays the same role.
//!
//! Both states also remember the generic iterate `x^k`, which makes FBE
//! monitoring possible without changing the iteration itself.

use std::time::Instant;

use crate::bc::{BcSolverConfig, SolverStatus, SolverTrace, TraceRow};
use crate::block::{BlockStructure, BlockVector};
use crate::error::{Error, Result};
use crate::fbe::fbe_value;
use crate::problem::{Problem, SmoothBlock, Stepsize};
use crate::prox::ProxAtom;
use crate::sampling::{IndexSet, SamplerState};
use crate::structured::{ConsensusG, SharingG};

/// Aggregates are recomputed from scratch every this many steps.
pub const REFRESH_PERIOD: usize = 4096;

/// Relative tolerance of the aggregate-consistency check.
pub const CONSISTENCY_TOL: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_drift(stored: &[f64], recomputed: &[f64]) -> Result<()> {
    let diff = diff_norm(stored, recomputed);
    if diff <= CONSISTENCY_TOL * (1.0 + norm(stored)) {
        Ok(())
    } else {
        Err(Error::AggregateDrift {
            stored: norm(stored),
            recomputed: norm(recomputed),
            diff,
        })
    }
}

/// `x - (gamma / N) grad f(x)`.
fn forward<S: SmoothBlock>(f: &S, x: &[f64], gamma: f64, n_blocks: usize, block: usize) -> Result<Vec<f64>> {
    let mut g = vec![0.0; x.len()];
    f.gradient(x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            block,
            what: "gradient",
        });
    }
    let scale = gamma / n_blocks as f64;
    Ok(x.iter().zip(&g).map(|(x, g)| x - scale * g).collect())
}

fn uniform_blocks<S: SmoothBlock>(blocks: &[S]) -> Result<(std::sync::Arc<BlockStructure>, usize)> {
    let dims: Vec<usize> = blocks.iter().map(|b| b.dim()).collect();
    let structure = BlockStructure::new(dims)?;
    let n = structure
        .common_dim()
        .ok_or_else(|| Error::InvalidStructure("all blocks must share one dimension".into()))?;
    Ok((structure, n))
}

/// `min (1/N) sum f_i(x) + g(x)` over a single `x in R^n`, posed as the
/// consensus problem.
pub struct FinitoProblem<S> {
    problem: Problem<S>,
    g: ConsensusG,
}

impl<S: SmoothBlock> FinitoProblem<S> {
    pub fn new(blocks: Vec<S>, g: ProxAtom) -> Result<Self> {
        let (_, n) = uniform_blocks(&blocks)?;
        let g = ConsensusG::new(g, n)?;
        let problem = Problem::new(blocks, Box::new(g))?;
        Ok(Self { problem, g })
    }

    /// The consensus formulation, solvable by the generic scheme.
    pub fn problem(&self) -> &Problem<S> {
        &self.problem
    }

    pub fn g(&self) -> &ProxAtom {
        &self.g.g
    }

    pub fn dim(&self) -> usize {
        self.g.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.problem.n_blocks()
    }
}

/// Aggregate state of the Finito/MISO iteration.
#[derive(Debug, Clone)]
pub struct FinitoState {
    pub s: Vec<Vec<f64>>,
    /// `hat gamma sum_i s_i / gamma_i`.
    pub s_hat: Vec<f64>,
    pub gamma_hat: f64,
    /// `hat gamma / gamma_i`.
    weights: Vec<f64>,
    gammas: Stepsize,
    /// Generic iterate `x_i^k`, i.e. the point where `s_i` was last formed.
    x: Vec<Vec<f64>>,
    steps: usize,
}

impl FinitoState {
    /// `s_i = x_init - (gamma_i / N) grad f_i(x_init)`.
    pub fn new<S: SmoothBlock>(fp: &FinitoProblem<S>, x_init: &[f64], step: &Stepsize) -> Result<Self> {
        if x_init.len() != fp.dim() {
            return Err(Error::DimensionMismatch {
                expected: fp.dim(),
                actual: x_init.len(),
            });
        }
        if x_init.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: 0,
                what: "initial point",
            });
        }
        step.validate(fp.problem())?;
        let n_blocks = fp.n_blocks();
        let s = fp
            .problem()
            .blocks
            .iter()
            .enumerate()
            .map(|(i, f)| forward(f, x_init, step.gamma(i), n_blocks, i))
            .collect::<Result<Vec<_>>>()?;
        let gamma_hat = step.harmonic_aggregate();
        let weights = if step.gammas().iter().all(|&g| g == step.gamma(0)) {
            vec![1.0 / n_blocks as f64; n_blocks]
        } else {
            step.gammas().iter().map(|g| gamma_hat / g).collect()
        };
        let mut st = Self {
            s_hat: Vec::new(),
            s,
            gamma_hat,
            weights,
            gammas: step.clone(),
            x: vec![x_init.to_vec(); n_blocks],
            steps: 0,
        };
        st.s_hat = st.recompute_aggregate();
        Ok(st)
    }

    fn recompute_aggregate(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.s[0].len()];
        for (si, w) in self.s.iter().zip(&self.weights) {
            for (a, v) in acc.iter_mut().zip(si) {
                *a += w * v;
            }
        }
        acc
    }

    /// Fails if `hat s` drifted from `hat gamma sum s_i / gamma_i`.
    pub fn check_consistency(&self) -> Result<()> {
        check_drift(&self.s_hat, &self.recompute_aggregate())
    }

    pub fn refresh(&mut self) {
        self.s_hat = self.recompute_aggregate();
    }

    pub fn stepsize(&self) -> &Stepsize {
        &self.gammas
    }

    /// The generic iterate `x^k` of the equivalent consensus run.
    pub fn generic_point(&self) -> Result<BlockVector> {
        BlockVector::from_blocks(&self.x)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// One Finito/MISO iteration; returns `z in prox_{hat gamma g}(hat s)` as
/// computed before the update.
pub fn finito_step<S: SmoothBlock>(
    fp: &FinitoProblem<S>,
    st: &mut FinitoState,
    indices: &IndexSet,
) -> Result<Vec<f64>> {
    let n_blocks = fp.n_blocks();
    let z = fp.g().apply(&st.s_hat, st.gamma_hat)?;
    for &i in indices.as_slice() {
        if i >= n_blocks {
            return Err(Error::Contract(format!("block index {i} out of range")));
        }
        let v = forward(&fp.problem().blocks[i], &z, st.gammas.gamma(i), n_blocks, i)?;
        let w = st.weights[i];
        for ((sh, vj), sj) in st.s_hat.iter_mut().zip(&v).zip(&st.s[i]) {
            *sh += w * (vj - sj);
        }
        st.s[i] = v;
        st.x[i].copy_from_slice(&z);
    }
    st.steps += 1;
    if st.steps.is_multiple_of(REFRESH_PERIOD) {
        st.check_consistency()?;
        st.refresh();
    }
    Ok(z)
}

/// `z = prox_{hat gamma g}(hat s)` after verifying the aggregate.
pub fn finito_extract_z<S: SmoothBlock>(fp: &FinitoProblem<S>, st: &FinitoState) -> Result<Vec<f64>> {
    st.check_consistency()?;
    fp.g().apply(&st.s_hat, st.gamma_hat)
}

/// `min sum f_i(x_i) / N + g(sum_i x_i)` over blocks of a common dimension.
pub struct SharingProblem<S> {
    problem: Problem<S>,
    g: SharingG,
}

impl<S: SmoothBlock> SharingProblem<S> {
    pub fn new(blocks: Vec<S>, g: ProxAtom) -> Result<Self> {
        let (_, n) = uniform_blocks(&blocks)?;
        let g = SharingG::new(g, n)?;
        let problem = Problem::new(blocks, Box::new(g))?;
        Ok(Self { problem, g })
    }

    /// The formulation `G = g o [I ... I]`, solvable by the generic scheme.
    pub fn problem(&self) -> &Problem<S> {
        &self.problem
    }

    pub fn g(&self) -> &SharingG {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.dim
    }

    pub fn n_blocks(&self) -> usize {
        self.problem.n_blocks()
    }
}

/// Aggregate state of the incremental sharing iteration.
#[derive(Debug, Clone)]
pub struct SharingState {
    pub s: Vec<Vec<f64>>,
    /// `sum_i s_i`.
    pub s_tilde: Vec<f64>,
    pub gamma_tilde: f64,
    /// Multiplier computed at the start of the last step.
    pub w: Vec<f64>,
    gammas: Stepsize,
    x: Vec<Vec<f64>>,
    steps: usize,
}

impl SharingState {
    /// `s_i = x_i - (gamma_i / N) grad f_i(x_i)`.
    pub fn new<S: SmoothBlock>(sp: &SharingProblem<S>, x0: &BlockVector, step: &Stepsize) -> Result<Self> {
        x0.ensure_conforms(&sp.problem().structure)?;
        step.validate(sp.problem())?;
        let n_blocks = sp.n_blocks();
        let s = sp
            .problem()
            .blocks
            .iter()
            .enumerate()
            .map(|(i, f)| forward(f, x0.block(i), step.gamma(i), n_blocks, i))
            .collect::<Result<Vec<_>>>()?;
        let mut st = Self {
            s_tilde: Vec::new(),
            s,
            gamma_tilde: step.sum(),
            w: vec![0.0; sp.dim()],
            gammas: step.clone(),
            x: x0.blocks().map(|b| b.to_vec()).collect(),
            steps: 0,
        };
        st.s_tilde = st.recompute_aggregate();
        Ok(st)
    }

    fn recompute_aggregate(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.s[0].len()];
        for si in &self.s {
            for (a, v) in acc.iter_mut().zip(si) {
                *a += v;
            }
        }
        acc
    }

    /// Fails if `tilde s` drifted from `sum s_i`.
    pub fn check_consistency(&self) -> Result<()> {
        check_drift(&self.s_tilde, &self.recompute_aggregate())
    }

    pub fn refresh(&mut self) {
        self.s_tilde = self.recompute_aggregate();
    }

    pub fn stepsize(&self) -> &Stepsize {
        &self.gammas
    }

    pub fn generic_point(&self) -> Result<BlockVector> {
        BlockVector::from_blocks(&self.x)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// One incremental sharing iteration.
pub fn sharing_step<S: SmoothBlock>(sp: &SharingProblem<S>, st: &mut SharingState, indices: &IndexSet) -> Result<()> {
    let n_blocks = sp.n_blocks();
    st.w = sp.g().multiplier(&st.s_tilde, st.gamma_tilde)?;
    for &i in indices.as_slice() {
        if i >= n_blocks {
            return Err(Error::Contract(format!("block index {i} out of range")));
        }
        let gamma = st.gammas.gamma(i);
        let zi: Vec<f64> = st.s[i].iter().zip(&st.w).map(|(s, w)| s + gamma * w).collect();
        let v = forward(&sp.problem().blocks[i], &zi, gamma, n_blocks, i)?;
        for ((st_j, vj), sj) in st.s_tilde.iter_mut().zip(&v).zip(&st.s[i]) {
            *st_j += vj - sj;
        }
        st.s[i] = v;
        st.x[i] = zi;
    }
    st.steps += 1;
    if st.steps.is_multiple_of(REFRESH_PERIOD) {
        st.check_consistency()?;
        st.refresh();
    }
    Ok(())
}

/// `z = (s_1 + gamma_1 w, ..., s_N + gamma_N w)` with `w` recomputed from
/// the current `tilde s`.
pub fn sharing_extract_z<S: SmoothBlock>(sp: &SharingProblem<S>, st: &SharingState) -> Result<BlockVector> {
    st.check_consistency()?;
    let w = sp.g().multiplier(&st.s_tilde, st.gamma_tilde)?;
    let blocks: Vec<Vec<f64>> =
        st.s.iter()
            .enumerate()
            .map(|(i, si)| {
                let g = st.gammas.gamma(i);
                si.iter().zip(&w).map(|(s, w)| s + g * w).collect()
            })
            .collect();
    BlockVector::from_blocks(&blocks)
}

/// Result of a monitored incremental run.
#[derive(Debug, Clone)]
pub struct IncrementalOutcome {
    /// `z^k` at termination, as a block vector of the generic formulation.
    pub z: BlockVector,
    pub trace: SolverTrace,
    pub status: SolverStatus,
    pub iterations: usize,
}

fn monitored_run<S: SmoothBlock>(
    problem: &Problem<S>,
    cfg: &BcSolverConfig,
    mut generic_point: impl FnMut() -> Result<BlockVector>,
    mut advance: impl FnMut(&IndexSet) -> Result<()>,
) -> Result<IncrementalOutcome> {
    cfg.validate()?;
    let mut sampler = SamplerState::new(&cfg.sampler, problem.n_blocks())?;
    let start = Instant::now();
    let mut trace = SolverTrace::default();
    let mut status = SolverStatus::MaxIters;
    let mut k = 0;
    let report = loop {
        let traced = k % cfg.trace_every == 0 || k == cfg.max_iters;
        if !traced {
            let indices = sampler.next_indices(k)?;
            advance(&indices)?;
            k += 1;
            continue;
        }
        let report = fbe_value(problem, &generic_point()?, &cfg.step)?;
        if !report.fbe.is_finite() {
            return Err(Error::NonFiniteEnvelope { iteration: k });
        }
        if cfg.check_descent {
            if let Some(prev) = trace.rows.last() {
                if report.fbe > prev.fbe + crate::bc::DESCENT_SLACK * (1.0 + prev.fbe.abs()) {
                    status = SolverStatus::DescentViolation { iteration: prev.k };
                }
            }
        }
        let done = report.residual <= cfg.tol_residual || k == cfg.max_iters || status != SolverStatus::MaxIters;
        let indices = if done { None } else { Some(sampler.next_indices(k)?) };
        trace.rows.push(TraceRow {
            k,
            indices: indices.as_ref().map(|s| s.as_slice().to_vec()).unwrap_or_default(),
            fbe: report.fbe,
            phi_z: report.phi_z,
            residual: report.residual,
            wall_ns: start.elapsed().as_nanos() as u64,
        });
        match indices {
            None => break report,
            Some(set) => {
                advance(&set)?;
                k += 1;
            }
        }
    };
    if status == SolverStatus::MaxIters && report.residual <= cfg.tol_residual {
        status = SolverStatus::Converged;
    }
    Ok(IncrementalOutcome {
        z: report.z,
        trace,
        status,
        iterations: k,
    })
}

/// Runs Finito/MISO from `x_init`, monitoring the FBE of the equivalent
/// consensus problem at every traced iteration.
pub fn solve_finito<S: SmoothBlock>(
    fp: &FinitoProblem<S>,
    x_init: &[f64],
    cfg: &BcSolverConfig,
) -> Result<IncrementalOutcome> {
    let st = std::cell::RefCell::new(FinitoState::new(fp, x_init, &cfg.step)?);
    monitored_run(
        fp.problem(),
        cfg,
        || st.borrow().generic_point(),
        |set| finito_step(fp, &mut st.borrow_mut(), set).map(|_| ()),
    )
}

/// Runs the incremental sharing method from `x0`.
pub fn solve_sharing<S: SmoothBlock>(
    sp: &SharingProblem<S>,
    x0: &BlockVector,
    cfg: &BcSolverConfig,
) -> Result<IncrementalOutcome> {
    let st = std::cell::RefCell::new(SharingState::new(sp, x0, &cfg.step)?);
    monitored_run(
        sp.problem(),
        cfg,
        || st.borrow().generic_point(),
        |set| sharing_step(sp, &mut st.borrow_mut(), set),
    )
}
