//! Random mixed instances for property-style checks: quadratic or sine
//! blocks, every atom, and separable, consensus, sharing or generalized
//! sharing `G`.

use std::sync::Arc;

use bcprox::prox::ProxAtom;
use bcprox::smooth::{QuadraticBlock, SineQuadraticBlock};
use bcprox::structured::{ConsensusG, GeneralizedSharingG, SeparableG, SharingG};
use bcprox::{BlockStructure, BlockVector, Nonsmooth, Problem, SmoothBlock, Stepsize};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::generate::DynProblem;

pub fn vec_in<R: Rng + ?Sized>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

pub fn random_atom<R: Rng + ?Sized>(rng: &mut R, convex_only: bool) -> ProxAtom {
    let kinds = if convex_only { 6 } else { 7 };
    match rng.random_range(0..kinds) {
        0 => ProxAtom::Zero,
        1 => ProxAtom::L1 {
            lambda: rng.random_range(0.0..2.0),
        },
        2 => {
            let lo = rng.random_range(-2.0..0.5);
            ProxAtom::Box {
                lo,
                hi: lo + rng.random_range(0.1..3.0),
            }
        }
        3 => ProxAtom::IndicatorNonneg,
        4 => ProxAtom::IndicatorPoint {
            c: rng.random_range(-1.0..1.0),
        },
        5 => ProxAtom::Quadratic {
            a: rng.random_range(0.0..3.0),
        },
        _ => ProxAtom::L0 {
            lambda: rng.random_range(0.01..2.0),
        },
    }
}

/// `H = M^T M + mu I` with entries of `M` in `[-1, 1]`.
pub fn random_quadratic<R: Rng + ?Sized>(rng: &mut R, dim: usize, mu: f64) -> QuadraticBlock {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(dim, dim) * mu;
    let h = (&h + h.transpose()) * 0.5;
    let q = DVector::from_vec(vec_in(rng, dim, 1.0));
    QuadraticBlock::new(h, q).expect("M^T M + mu I is symmetric positive semidefinite")
}

pub fn random_sine<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> SineQuadraticBlock {
    let a = rng.random_range(0.1..2.0);
    let b = rng.random_range(-2.0..2.0);
    SineQuadraticBlock::new(a, b, vec_in(rng, dim, 1.0)).expect("a > 0")
}

pub fn random_blocks<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], convex: bool, mu: f64) -> Vec<Box<dyn SmoothBlock>> {
    dims.iter()
        .map(|&d| -> Box<dyn SmoothBlock> {
            if convex || rng.random_bool(0.5) {
                Box::new(random_quadratic(rng, d, mu))
            } else {
                Box::new(random_sine(rng, d))
            }
        })
        .collect()
}

/// Separable `G` for mixed block sizes; otherwise one of the four kinds.
pub fn random_g<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], convex: bool, step: &Stepsize) -> Box<dyn Nonsmooth> {
    let common = dims.iter().all(|&d| d == dims[0]);
    let kinds = if common { 4 } else { 1 };
    let atom = random_atom(rng, convex);
    match rng.random_range(0..kinds) {
        0 => Box::new(SeparableG::new(atom).expect("valid atom")),
        1 => Box::new(ConsensusG::new(atom, dims[0]).expect("valid atom")),
        2 => Box::new(SharingG::new(atom, dims[0]).expect("valid atom")),
        _ => {
            let rows = rng.random_range(1..=dims[0]);
            let a = dims
                .iter()
                .map(|&d| DMatrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            Box::new(GeneralizedSharingG::new(a, step).expect("random matrices have full row rank"))
        }
    }
}

pub struct CorpusInstance {
    pub problem: DynProblem,
    pub step: Stepsize,
}

/// `N <= max_n`, `n_i <= max_dim`, stepsizes in `(0.05, 0.99) N / L_i`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_n: usize,
    max_dim: usize,
    convex: bool,
    mu: f64,
) -> CorpusInstance {
    let n = rng.random_range(1..=max_n);
    let dims: Vec<usize> = if rng.random_bool(0.5) {
        vec![rng.random_range(1..=max_dim); n]
    } else {
        (0..n).map(|_| rng.random_range(1..=max_dim)).collect()
    };
    let blocks = random_blocks(rng, &dims, convex, mu);
    let gammas: Vec<f64> = blocks
        .iter()
        .map(|b| rng.random_range(0.05..0.99) * n as f64 / b.lipschitz())
        .collect();
    let step = Stepsize::new(gammas).expect("positive stepsizes");
    let g = random_g(rng, &dims, convex, &step);
    CorpusInstance {
        problem: Problem::new(blocks, g).expect("consistent dimensions"),
        step,
    }
}

pub fn random_point<R: Rng + ?Sized>(rng: &mut R, structure: &Arc<BlockStructure>, r: f64) -> BlockVector {
    BlockVector::from_vec(structure, vec_in(rng, structure.total_dim(), r)).expect("length matches")
}

/// A random point of `dom G`, obtained as a prox output.
pub fn feasible_point<R: Rng + ?Sized>(rng: &mut R, inst: &CorpusInstance, r: f64) -> BlockVector {
    let u = random_point(rng, &inst.problem.structure, r);
    inst.problem
        .nonsmooth
        .prox(&u, &inst.step)
        .expect("prox of a finite point")
}

/// `sum_i w_i ||v_i||^2`.
pub fn sq_norm_weighted(v: &BlockVector, w: &[f64]) -> f64 {
    (0..v.n_blocks())
        .map(|i| w[i] * v.block(i).iter().map(|x| x * x).sum::<f64>())
        .sum()
}
