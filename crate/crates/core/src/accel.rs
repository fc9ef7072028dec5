//! Accelerated block-coordinate proximal gradient for convex quadratic
//! blocks `f_i(x) = 1/2 x^T H_i x + q_i^T x` and convex `G`.
//!
//! The method is accelerated coordinate descent applied to the scaled
//! envelope `phi o Q^{-1/2}` with `Q_i = I / gamma_i - H_i / N`, written back
//! in the unscaled variables. `r = Gamma grad F(x)` and `v = Gamma grad F(w)`
//! are cached and updated through the sampled block only.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use std::time::Instant;

use crate::bc::{SolverStatus, SolverTrace, TraceRow};
use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::fbe::{fbe_value, forward_backward, FbeReport};
use crate::problem::{Problem, SmoothBlock, Stepsize};
use crate::sampling::{SamplerSpec, SamplerState};
use crate::smooth::QuadraticBlock;

/// Cached gradients are recomputed from scratch every this many steps.
pub const CACHE_REFRESH_PERIOD: usize = 4096;

/// Relative tolerance when comparing cached and recomputed gradients.
pub const CACHE_TOL: f64 = 1e-8;

pub type QuadraticProblem = Problem<QuadraticBlock>;

/// The block-diagonal metric `Q` with per-block square roots.
#[derive(Debug, Clone)]
pub struct QMetric {
    q: Vec<DMatrix<f64>>,
    half: Vec<DMatrix<f64>>,
    inv_half: Vec<DMatrix<f64>>,
}

impl QMetric {
    pub fn new(p: &QuadraticProblem, step: &Stepsize) -> Result<Self> {
        step.validate(p)?;
        let n = p.n_blocks() as f64;
        let mut out = Self {
            q: Vec::new(),
            half: Vec::new(),
            inv_half: Vec::new(),
        };
        for (i, b) in p.blocks.iter().enumerate() {
            let d = b.dim();
            let qi = DMatrix::identity(d, d) / step.gamma(i) - b.hessian() / n;
            let eig = SymmetricEigen::new(qi.clone());
            if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
                return Err(Error::Contract(format!("Q_{i} is not positive definite")));
            }
            let root = eig.eigenvalues.map(f64::sqrt);
            let vecs = &eig.eigenvectors;
            out.half.push(vecs * DMatrix::from_diagonal(&root) * vecs.transpose());
            out.inv_half
                .push(vecs * DMatrix::from_diagonal(&root.map(|s| 1.0 / s)) * vecs.transpose());
            out.q.push(qi);
        }
        Ok(out)
    }

    pub fn block(&self, i: usize) -> &DMatrix<f64> {
        &self.q[i]
    }

    fn apply(mats: &[DMatrix<f64>], x: &BlockVector) -> BlockVector {
        let mut out = x.clone();
        for (i, m) in mats.iter().enumerate() {
            let v = m * DVector::from_column_slice(x.block(i));
            out.block_mut(i).copy_from_slice(v.as_slice());
        }
        out
    }

    /// `Q^{1/2} x`.
    pub fn apply_half(&self, x: &BlockVector) -> BlockVector {
        Self::apply(&self.half, x)
    }

    /// `Q^{-1/2} x`.
    pub fn apply_inv_half(&self, x: &BlockVector) -> BlockVector {
        Self::apply(&self.inv_half, x)
    }

    /// `||x||_Q^2`.
    pub fn norm_sq(&self, x: &BlockVector) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let v = DVector::from_column_slice(x.block(i));
                v.dot(&(m * &v))
            })
            .sum()
    }
}

/// `sigma = (1/N) min_i gamma_i mu_i`.
pub fn accel_sigma(p: &QuadraticProblem, step: &Stepsize) -> f64 {
    let n = p.n_blocks() as f64;
    p.blocks
        .iter()
        .enumerate()
        .map(|(i, b)| step.gamma(i) * b.strong_convexity())
        .fold(f64::INFINITY, f64::min)
        / n
}

/// `phi_Gamma(Q^{-1/2} x_tilde)`.
pub fn fbe_scaled(p: &QuadraticProblem, x_tilde: &BlockVector, step: &Stepsize, q: &QMetric) -> Result<f64> {
    Ok(fbe_value(p, &q.apply_inv_half(x_tilde), step)?.fbe)
}

/// `Q^{1/2}(x - T(x))` with `x = Q^{-1/2} x_tilde`, the gradient of the
/// scaled envelope.
pub fn fbe_gradient_scaled(
    p: &QuadraticProblem,
    x_tilde: &BlockVector,
    step: &Stepsize,
    q: &QMetric,
) -> Result<BlockVector> {
    let x = q.apply_inv_half(x_tilde);
    let z = forward_backward(p, &x, step)?;
    Ok(q.apply_half(&x.sub(&z)))
}

fn scaled_gradient(p: &QuadraticProblem, x: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
    let mut g = crate::problem::grad_f(p, x)?;
    for i in 0..p.n_blocks() {
        let gamma = step.gamma(i);
        g.block_mut(i).iter_mut().for_each(|v| *v *= gamma);
    }
    Ok(g)
}

/// State of the accelerated iteration.
#[derive(Debug, Clone)]
pub struct AccelState {
    pub x: BlockVector,
    pub y: BlockVector,
    pub w: BlockVector,
    pub z: BlockVector,
    /// `Gamma grad F(w)`.
    pub v: BlockVector,
    /// `Gamma grad F(x)`.
    pub r: BlockVector,
    pub tau: f64,
    pub eta: f64,
    pub sigma: f64,
    pub q: QMetric,
    step: Stepsize,
    k: usize,
}

impl AccelState {
    pub fn stepsize(&self) -> &Stepsize {
        &self.step
    }

    /// Number of completed steps.
    pub fn iteration(&self) -> usize {
        self.k
    }

    /// Recomputes `r` and `v` from scratch, failing if the cached values
    /// drifted by more than `1e-8` relative.
    pub fn refresh(&mut self, p: &QuadraticProblem) -> Result<()> {
        for (cached, at) in [(&mut self.r, &self.x), (&mut self.v, &self.w)] {
            let fresh = scaled_gradient(p, at, &self.step)?;
            let diff = fresh.max_abs_diff(cached);
            let scale = 1.0 + fresh.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if diff > CACHE_TOL * scale {
                return Err(Error::AggregateDrift {
                    stored: cached.norm(),
                    recomputed: fresh.norm(),
                    diff,
                });
            }
            *cached = fresh;
        }
        Ok(())
    }
}

/// Initializes the accelerated method at `x0`.
pub fn accel_init(p: &QuadraticProblem, x0: BlockVector, step: &Stepsize) -> Result<AccelState> {
    if !p.nonsmooth.is_convex() {
        return Err(Error::Config("the accelerated method requires a convex G".into()));
    }
    x0.ensure_conforms(&p.structure)?;
    let q = QMetric::new(p, step)?;
    let n = p.n_blocks() as f64;
    let sigma = accel_sigma(p, step);
    let (tau, eta) = if sigma == 0.0 {
        // tau is set inside the first step
        (f64::NAN, 1.0 / (n * n))
    } else {
        let tau = 2.0 / (1.0 + (1.0 + 4.0 * n * n / sigma).sqrt());
        (tau, 1.0 / (tau * n * n))
    };
    let r = scaled_gradient(p, &x0, step)?;
    let mut fwd = x0.clone();
    for (f, g) in fwd.as_mut_slice().iter_mut().zip(r.as_slice()) {
        *f -= g;
    }
    let z = p.nonsmooth.prox(&fwd, step)?;
    Ok(AccelState {
        y: x0.clone(),
        w: x0.clone(),
        v: r.clone(),
        x: x0,
        z,
        r,
        tau,
        eta,
        sigma,
        q,
        step: step.clone(),
        k: 0,
    })
}

/// One step of the accelerated method with sampled block `i`.
pub fn accel_step(p: &QuadraticProblem, st: &mut AccelState, i: usize) -> Result<()> {
    let n_blocks = p.n_blocks();
    if i >= n_blocks {
        return Err(Error::Contract(format!("block index {i} out of range")));
    }
    let n = n_blocks as f64;
    let gamma = st.step.gamma(i);
    let range = p.structure.range(i);

    let zi = st.z.block(i).to_vec();
    let xi = st.x.block(i).to_vec();
    let dz: Vec<f64> = zi.iter().zip(&xi).map(|(z, x)| z - x).collect();

    let mut y = st.x.clone();
    y.block_mut(i).copy_from_slice(&zi);

    let mut grad = vec![0.0; zi.len()];
    p.blocks[i].gradient(&zi, &mut grad);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            block: i,
            what: "gradient",
        });
    }
    let d: Vec<f64> = grad.iter().zip(st.r.block(i)).map(|(g, r)| gamma / n * g - r).collect();

    let es = st.eta * st.sigma;
    let damp = 1.0 / (1.0 + es);
    let ne = n * st.eta;
    for (j, (v, r)) in st.v.as_mut_slice().iter_mut().zip(st.r.as_slice()).enumerate() {
        let kick = if range.contains(&j) {
            ne * d[j - range.start]
        } else {
            0.0
        };
        *v = damp * (*v + es * r + kick);
    }
    for (j, (w, x)) in st.w.as_mut_slice().iter_mut().zip(st.x.as_slice()).enumerate() {
        let kick = if range.contains(&j) {
            ne * dz[j - range.start]
        } else {
            0.0
        };
        *w = damp * (*w + es * x + kick);
    }

    if st.sigma == 0.0 {
        let k = st.k as f64;
        st.eta = (k + 3.0) / (2.0 * n * n);
        st.tau = 2.0 / (k + 3.0);
    }
    let tau = st.tau;

    for ((x, w), y) in st.x.as_mut_slice().iter_mut().zip(st.w.as_slice()).zip(y.as_slice()) {
        *x = tau * w + (1.0 - tau) * y;
    }
    for (j, (r, v)) in st.r.as_mut_slice().iter_mut().zip(st.v.as_slice()).enumerate() {
        let ry = if range.contains(&j) {
            *r + d[j - range.start]
        } else {
            *r
        };
        *r = tau * v + (1.0 - tau) * ry;
    }
    st.y = y;

    st.k += 1;
    if st.k.is_multiple_of(CACHE_REFRESH_PERIOD) {
        st.refresh(p)?;
    }

    let mut fwd = st.x.clone();
    for (f, g) in fwd.as_mut_slice().iter_mut().zip(st.r.as_slice()) {
        *f -= g;
    }
    st.z = p.nonsmooth.prox(&fwd, &st.step)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AccelConfig {
    pub step: Stepsize,
    /// Seed of the uniform index stream.
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the residual at `y^k` is at most this.
    pub tol_residual: f64,
    pub trace_every: usize,
}

impl AccelConfig {
    pub fn new(step: Stepsize, seed: u64, max_iters: usize) -> Self {
        Self {
            step,
            seed,
            max_iters,
            tol_residual: 0.0,
            trace_every: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AccelOutcome {
    pub y: BlockVector,
    /// Envelope report at `y^k`.
    pub report: FbeReport,
    /// Rows carry `phi(y^k)`, which need not decrease monotonically.
    pub trace: SolverTrace,
    pub status: SolverStatus,
    pub iterations: usize,
}

/// Runs the accelerated method with uniform single-block sampling, tracing
/// the envelope at `y^k` (with `y^0 = x^0`).
pub fn solve_accel(p: &QuadraticProblem, x0: BlockVector, cfg: &AccelConfig) -> Result<AccelOutcome> {
    if cfg.max_iters == 0 || cfg.trace_every == 0 {
        return Err(Error::Config("max_iters and trace_every must be at least 1".into()));
    }
    let n = p.n_blocks();
    let mut sampler = SamplerState::new(&SamplerSpec::uniform(n, cfg.seed), n)?;
    let mut st = accel_init(p, x0, &cfg.step)?;
    let start = Instant::now();
    let mut trace = SolverTrace::default();
    let mut status = SolverStatus::MaxIters;
    let report = loop {
        let k = st.k;
        let traced = k % cfg.trace_every == 0 || k == cfg.max_iters;
        let report = if traced || cfg.tol_residual > 0.0 {
            let rep = fbe_value(p, &st.y, &cfg.step)?;
            if !rep.fbe.is_finite() {
                return Err(Error::NonFiniteEnvelope { iteration: k });
            }
            Some(rep)
        } else {
            None
        };
        let done = k == cfg.max_iters || report.as_ref().is_some_and(|r| r.residual <= cfg.tol_residual);
        let indices = if done { None } else { Some(sampler.next_indices(k)?) };
        if let (true, Some(rep)) = (traced || done, &report) {
            trace.rows.push(TraceRow {
                k,
                indices: indices.as_ref().map(|s| s.as_slice().to_vec()).unwrap_or_default(),
                fbe: rep.fbe,
                phi_z: rep.phi_z,
                residual: rep.residual,
                wall_ns: start.elapsed().as_nanos() as u64,
            });
        }
        match indices {
            None => break report.expect("final iteration is always evaluated"),
            Some(set) => accel_step(p, &mut st, set.as_slice()[0])?,
        }
    };
    if report.residual <= cfg.tol_residual {
        status = SolverStatus::Converged;
    }
    Ok(AccelOutcome {
        y: st.y,
        report,
        trace,
        status,
        iterations: st.k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::ProxAtom;
    use crate::structured::SeparableG;

    fn problem(h: &[f64], g: ProxAtom) -> QuadraticProblem {
        let blocks = h
            .iter()
            .map(|&a| QuadraticBlock::isotropic(a, vec![0.0]).unwrap())
            .collect();
        Problem::new(blocks, Box::new(SeparableG::new(g).unwrap())).unwrap()
    }

    #[test]
    fn solve_traces_every_row_and_stops_on_tolerance() {
        let p = problem(&[1.0, 2.0], ProxAtom::L1 { lambda: 0.1 });
        let step = Stepsize::uniform(2, 0.9).unwrap();
        let x0 = BlockVector::from_blocks(&[[1.0], [-1.0]]).unwrap();
        let out = solve_accel(&p, x0.clone(), &AccelConfig::new(step.clone(), 7, 25)).unwrap();
        assert_eq!(out.iterations, 25);
        assert_eq!(out.trace.rows.len(), 26);
        assert_eq!(out.trace.rows[0].fbe, fbe_value(&p, &x0, &step).unwrap().fbe);
        assert!(out.trace.rows[25].indices.is_empty());

        let mut cfg = AccelConfig::new(step, 7, 100_000);
        cfg.tol_residual = 1e-12;
        let out = solve_accel(&p, x0, &cfg).unwrap();
        assert_eq!(out.status, SolverStatus::Converged);
        assert!(out.iterations < 100_000);
    }

    #[test]
    fn convex_parameters() {
        let p = problem(&[0.0, 1.0], ProxAtom::Zero);
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let mut st = accel_init(&p, BlockVector::from_blocks(&[[1.0], [1.0]]).unwrap(), &step).unwrap();
        assert_eq!(st.sigma, 0.0);
        assert_eq!(st.eta, 0.25);
        accel_step(&p, &mut st, 0).unwrap();
        assert_eq!(st.tau, 2.0 / 3.0);
        assert_eq!(st.eta, 3.0 / 8.0);
    }

    #[test]
    fn strongly_convex_parameters() {
        let p = problem(&[1.0], ProxAtom::Zero);
        // sigma = gamma mu / N = 1
        let st = accel_init(
            &p,
            BlockVector::from_blocks(&[[1.0]]).unwrap(),
            &Stepsize::uniform(1, 1.0 - 1e-9).unwrap(),
        );
        let st = st.unwrap();
        assert!((st.sigma - 1.0).abs() < 1e-8);
        let tau = 2.0 / (1.0 + 5.0f64.sqrt());
        assert!((st.tau - tau).abs() < 1e-8);
        assert!((st.eta - 1.0 / tau).abs() < 1e-8);
    }

    #[test]
    fn zero_hessian_gives_q_equal_gamma_inverse() {
        let p = problem(&[0.0, 0.0], ProxAtom::Zero);
        let step = Stepsize::new(vec![0.5, 4.0]).unwrap();
        let q = QMetric::new(&p, &step).unwrap();
        assert_eq!(q.block(0)[(0, 0)], 2.0);
        assert_eq!(q.block(1)[(0, 0)], 0.25);
        assert_eq!(accel_sigma(&p, &step), 0.0);
    }

    #[test]
    fn minimizer_is_invariant() {
        let p = problem(&[1.0, 2.0], ProxAtom::L1 { lambda: 1.0 });
        let step = Stepsize::default_for(&p).unwrap();
        let x0 = BlockVector::from_blocks(&[[0.0], [0.0]]).unwrap();
        let mut st = accel_init(&p, x0.clone(), &step).unwrap();
        for k in 0..20 {
            accel_step(&p, &mut st, k % 2).unwrap();
            assert_eq!(st.x, x0);
            assert_eq!(st.z, x0);
        }
    }

    #[test]
    fn nonconvex_g_is_rejected() {
        let p = problem(&[1.0], ProxAtom::L0 { lambda: 1.0 });
        let err = accel_init(
            &p,
            BlockVector::from_blocks(&[[1.0]]).unwrap(),
            &Stepsize::uniform(1, 0.5).unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn scaled_gradient_of_scalar_quadratic() {
        // T(x) = x / 2 and Q = 1, so the gradient is x / 2
        let p = problem(&[1.0], ProxAtom::Zero);
        let step = Stepsize::uniform(1, 0.5).unwrap();
        let q = QMetric::new(&p, &step).unwrap();
        let g = fbe_gradient_scaled(&p, &BlockVector::from_blocks(&[[3.0]]).unwrap(), &step, &q).unwrap();
        assert_eq!(g.as_slice(), &[1.5]);
    }

    #[test]
    fn corrupted_cache_is_detected() {
        let p = problem(&[1.0, 2.0], ProxAtom::Zero);
        let step = Stepsize::default_for(&p).unwrap();
        let mut st = accel_init(&p, BlockVector::from_blocks(&[[1.0], [2.0]]).unwrap(), &step).unwrap();
        st.r.as_mut_slice()[1] += 1e-3;
        assert!(matches!(st.refresh(&p), Err(Error::AggregateDrift { .. })));
    }
}
