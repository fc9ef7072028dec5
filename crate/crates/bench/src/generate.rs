//! Seeded synthetic instances. All draws come from the generator stream of
//! the run seed, so equal seeds give bit-identical problems.

use bcprox::accel::QuadraticProblem;
use bcprox::bc::{solve_bc, BcSolverConfig};
use bcprox::incremental::{FinitoProblem, SharingProblem};
use bcprox::prox::ProxAtom;
use bcprox::sampling::{stream_rng, SamplerSpec, GENERATOR_STREAM, START_STREAM};
use bcprox::smooth::{QuadraticBlock, SineQuadraticBlock};
use bcprox::structured::{ConsensusG, SeparableG, SharingG};
use bcprox::{BlockStructure, BlockVector, Nonsmooth, Problem, SmoothBlock, Stepsize};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Coupling, Family, ProblemSpec, SmoothKind};
use crate::error::Result;

pub type DynProblem = Problem<Box<dyn SmoothBlock>>;

/// Ground-truth solve: full proximal gradient to this residual...
pub const GROUND_TRUTH_TOL: f64 = 1e-13;
/// ...or at most this many iterations.
pub const GROUND_TRUTH_MAX_ITERS: usize = 1_000_000;

pub enum Instance {
    FiniteSum(FinitoProblem<Box<dyn SmoothBlock>>),
    Sharing(SharingProblem<Box<dyn SmoothBlock>>),
    Generic(DynProblem),
    Accel(QuadraticProblem),
}

pub struct Generated {
    pub instance: Instance,
    pub step: Stepsize,
    /// Starting point of the generic formulation (repeated block for `finite_sum`).
    pub x0: BlockVector,
}

impl Generated {
    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.with_problem(|p| p.lipschitz_constants(), |p| p.lipschitz_constants())
    }

    pub fn strong_convexity_constants(&self) -> Vec<f64> {
        self.with_problem(|p| p.strong_convexity_constants(), |p| p.strong_convexity_constants())
    }

    pub fn n_blocks(&self) -> usize {
        self.x0.n_blocks()
    }

    fn with_problem<T>(&self, dynamic: impl FnOnce(&DynProblem) -> T, quad: impl FnOnce(&QuadraticProblem) -> T) -> T {
        match &self.instance {
            Instance::FiniteSum(fp) => dynamic(fp.problem()),
            Instance::Sharing(sp) => dynamic(sp.problem()),
            Instance::Generic(p) => dynamic(p),
            Instance::Accel(p) => quad(p),
        }
    }

    /// `min Phi` (or a stationary value for nonconvex instances) from a full
    /// proximal-gradient run started at `x0`.
    pub fn ground_truth(&self) -> Result<GroundTruth> {
        match &self.instance {
            Instance::FiniteSum(fp) => full_step(fp.problem(), &self.x0, &self.step),
            Instance::Sharing(sp) => full_step(sp.problem(), &self.x0, &self.step),
            Instance::Generic(p) => full_step(p, &self.x0, &self.step),
            Instance::Accel(p) => full_step(p, &self.x0, &self.step),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub min_phi: f64,
    pub residual: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub x_star: Vec<f64>,
}

pub fn full_step<S: SmoothBlock>(p: &Problem<S>, x0: &BlockVector, step: &Stepsize) -> Result<GroundTruth> {
    let mut cfg = BcSolverConfig::new(step.clone(), SamplerSpec::full(p.n_blocks()), GROUND_TRUTH_MAX_ITERS);
    cfg.tol_residual = GROUND_TRUTH_TOL;
    cfg.trace_every = usize::MAX;
    cfg.check_descent = false;
    let out = solve_bc(p, x0.clone(), &cfg)?;
    Ok(GroundTruth {
        min_phi: out.report.phi_z,
        residual: out.report.residual,
        iterations: out.iterations,
        x_star: out.z.into_vec(),
    })
}

/// Quadratic block with eigenvalues spanning `[L / kappa, L]` (or `[0, L]`),
/// rotated by a random Householder reflection. Without strong convexity the
/// linear term lies in the range of the Hessian, so `f` attains its minimum.
pub fn random_quadratic<R: Rng + ?Sized>(rng: &mut R, spec: &ProblemSpec) -> Result<QuadraticBlock> {
    let n = spec.dim;
    let l = rng.random_range(spec.lipschitz[0]..=spec.lipschitz[1]);
    let kappa = rng.random_range(spec.kappa[0]..=spec.kappa[1]);
    let lo = if spec.strongly_convex { l / kappa } else { 0.0 };
    let mut eig: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=l)).collect();
    eig[0] = l;
    if n > 1 {
        eig[n - 1] = lo;
    }
    let v: DVector<f64> = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let reflect = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared().max(f64::MIN_POSITIVE));
    let h = &reflect * DMatrix::from_diagonal(&DVector::from_vec(eig)) * reflect.transpose();
    let h = (&h + h.transpose()) * 0.5;
    let mut q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    if !spec.strongly_convex {
        // q in range(H) keeps f bounded below along the null space.
        q = &h * q;
    }
    Ok(QuadraticBlock::new(h, q)?)
}

pub fn random_sine<R: Rng + ?Sized>(rng: &mut R, spec: &ProblemSpec) -> Result<SineQuadraticBlock> {
    let a = rng.random_range(1.0..2.0);
    let r = spec.sine_ratio;
    let b = if r > 0.0 { rng.random_range(-r * a..=r * a) } else { 0.0 };
    let c = (0..spec.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok(SineQuadraticBlock::new(a, b, c)?)
}

fn nonsmooth(coupling: Coupling, atom: ProxAtom, dim: usize) -> Result<Box<dyn Nonsmooth>> {
    Ok(match coupling {
        Coupling::Separable => Box::new(SeparableG::new(atom)?),
        Coupling::Consensus => Box::new(ConsensusG::new(atom, dim)?),
        Coupling::Sharing => Box::new(SharingG::new(atom, dim)?),
    })
}

/// Builds the instance described by `spec` for `seed`.
pub fn generate_problem(spec: &ProblemSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = stream_rng(seed, GENERATOR_STREAM);
    let n = spec.n_blocks;
    let structure = BlockStructure::uniform(n, spec.dim)?;

    let mut start = stream_rng(seed, START_STREAM);
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| start.random_range(-2.0..2.0)).collect() };

    if spec.family == Family::Accel {
        let blocks = (0..n)
            .map(|_| random_quadratic(&mut rng, spec))
            .collect::<Result<Vec<_>>>()?;
        let p = Problem::new(blocks, nonsmooth(spec.coupling, spec.regularizer, spec.dim)?)?;
        let step = Stepsize::fraction_of_bound(&p, spec.step_fraction)?;
        let x0 = BlockVector::from_vec(&structure, draw(structure.total_dim()))?;
        return Ok(Generated {
            instance: Instance::Accel(p),
            step,
            x0,
        });
    }

    let blocks = (0..n)
        .map(|_| -> Result<Box<dyn SmoothBlock>> {
            Ok(match spec.smooth {
                SmoothKind::Quadratic => Box::new(random_quadratic(&mut rng, spec)?),
                SmoothKind::Sine => Box::new(random_sine(&mut rng, spec)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let alpha = spec.step_fraction;
    Ok(match spec.family {
        Family::FiniteSum => {
            let fp = FinitoProblem::new(blocks, spec.regularizer)?;
            let step = Stepsize::fraction_of_bound(fp.problem(), alpha)?;
            let x0 = BlockVector::repeated(&structure, &draw(spec.dim))?;
            Generated {
                instance: Instance::FiniteSum(fp),
                step,
                x0,
            }
        }
        Family::Sharing => {
            let sp = SharingProblem::new(blocks, spec.regularizer)?;
            let step = Stepsize::fraction_of_bound(sp.problem(), alpha)?;
            let x0 = BlockVector::from_vec(&structure, draw(structure.total_dim()))?;
            Generated {
                instance: Instance::Sharing(sp),
                step,
                x0,
            }
        }
        Family::GenericBc => {
            let p = Problem::new(blocks, nonsmooth(spec.coupling, spec.regularizer, spec.dim)?)?;
            let step = Stepsize::fraction_of_bound(&p, alpha)?;
            let x0 = BlockVector::from_vec(&structure, draw(structure.total_dim()))?;
            Generated {
                instance: Instance::Generic(p),
                step,
                x0,
            }
        }
        Family::Accel => unreachable!("handled above"),
    })
}
