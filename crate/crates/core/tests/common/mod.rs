#![allow(dead_code)]

use std::sync::Arc;

use bcprox::prox::ProxAtom;
use bcprox::sampling::stream_rng;
use bcprox::smooth::{QuadraticBlock, SineQuadraticBlock};
use bcprox::structured::{ConsensusG, GeneralizedSharingG, SeparableG, SharingG};
use bcprox::{BlockStructure, BlockVector, Nonsmooth, Problem, SmoothBlock, Stepsize};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type DynProblem = Problem<Box<dyn SmoothBlock>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 99)
}

pub fn vec_in(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

pub fn random_atom(rng: &mut ChaCha8Rng, convex_only: bool) -> ProxAtom {
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
pub fn random_quadratic(rng: &mut ChaCha8Rng, dim: usize, mu: f64) -> QuadraticBlock {
    let m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(dim, dim) * mu;
    let h = (&h + h.transpose()) * 0.5;
    let q = DVector::from_vec(vec_in(rng, dim, 1.0));
    QuadraticBlock::new(h, q).unwrap()
}

pub fn random_sine(rng: &mut ChaCha8Rng, dim: usize) -> SineQuadraticBlock {
    let a = rng.random_range(0.1..2.0);
    let b = rng.random_range(-2.0..2.0);
    SineQuadraticBlock::new(a, b, vec_in(rng, dim, 1.0)).unwrap()
}

pub fn random_blocks(rng: &mut ChaCha8Rng, dims: &[usize], convex: bool, mu: f64) -> Vec<Box<dyn SmoothBlock>> {
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

/// Random `G` among separable, consensus, sharing and generalized sharing
/// (the last three only when all blocks share a dimension).
pub fn random_g(rng: &mut ChaCha8Rng, dims: &[usize], convex: bool, step: &Stepsize) -> Box<dyn Nonsmooth> {
    let common = dims.iter().all(|&d| d == dims[0]);
    let kinds = if common { 4 } else { 1 };
    let atom = random_atom(rng, convex);
    match rng.random_range(0..kinds) {
        0 => Box::new(SeparableG::new(atom).unwrap()),
        1 => Box::new(ConsensusG::new(atom, dims[0]).unwrap()),
        2 => Box::new(SharingG::new(atom, dims[0]).unwrap()),
        _ => {
            let rows = rng.random_range(1..=dims[0]);
            let a = dims
                .iter()
                .map(|&d| DMatrix::from_fn(rows, d, |_, _| rng.random_range(-1.0..1.0)))
                .collect();
            Box::new(GeneralizedSharingG::new(a, step).unwrap())
        }
    }
}

pub struct Instance {
    pub problem: DynProblem,
    pub step: Stepsize,
}

/// Random problem with `N <= max_n`, `n_i <= max_dim` and stepsizes drawn in
/// `(0.05, 0.99) N / L_i`.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize, max_dim: usize, convex: bool, mu: f64) -> Instance {
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
    let step = Stepsize::new(gammas).unwrap();
    let g = random_g(rng, &dims, convex, &step);
    Instance {
        problem: Problem::new(blocks, g).unwrap(),
        step,
    }
}

pub fn random_point(rng: &mut ChaCha8Rng, structure: &Arc<BlockStructure>, r: f64) -> BlockVector {
    BlockVector::from_vec(structure, vec_in(rng, structure.total_dim(), r)).unwrap()
}

/// A random point in `dom G`, obtained as a prox output.
pub fn feasible_point(rng: &mut ChaCha8Rng, inst: &Instance, r: f64) -> BlockVector {
    let u = random_point(rng, &inst.problem.structure, r);
    inst.problem.nonsmooth.prox(&u, &inst.step).unwrap()
}

pub fn sq_norm_weighted(v: &BlockVector, w: &[f64]) -> f64 {
    (0..v.n_blocks())
        .map(|i| w[i] * v.block(i).iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Relative tolerance `tol (1 + scale)`.
pub fn rel(tol: f64, scale: f64) -> f64 {
    tol * (1.0 + scale.abs())
}
