//! Oracle interfaces, the stepsize metric and the composite problem
//! `Phi(x) = (1/N) sum_i f_i(x_i) + G(x)`.

use std::sync::Arc;

use crate::block::{BlockStructure, BlockVector};
use crate::error::{Error, Result};

/// Relative margin kept away from the stepsize bound `N / L_i`.
pub const STEPSIZE_MARGIN: f64 = 1e-12;

/// Default fraction of the admissible stepsize, `gamma_i = alpha N / L_i`.
pub const DEFAULT_STEPSIZE_FRACTION: f64 = 0.95;

/// A smooth block function `f_i` with `L_i`-Lipschitz gradient.
pub trait SmoothBlock: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Writes `grad f_i(x)` into `out`.
    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn lipschitz(&self) -> f64;

    /// Strong convexity modulus; 0 means nothing is asserted.
    fn strong_convexity(&self) -> f64 {
        0.0
    }
}

impl<S: SmoothBlock + ?Sized> SmoothBlock for Box<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn strong_convexity(&self) -> f64 {
        (**self).strong_convexity()
    }
}

impl<S: SmoothBlock + ?Sized> SmoothBlock for Arc<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (**self).gradient(x, out)
    }
    fn lipschitz(&self) -> f64 {
        (**self).lipschitz()
    }
    fn strong_convexity(&self) -> f64 {
        (**self).strong_convexity()
    }
}

/// The nonsmooth, possibly nonseparable and nonconvex term `G`.
pub trait Nonsmooth: Send + Sync {
    /// `G(x)`, possibly `+inf`.
    fn value(&self, x: &BlockVector) -> f64;

    /// An element of `prox_G^{Gamma^{-1}}(u)`. For set-valued proxes the
    /// element of smallest norm is returned (componentwise smallest on ties).
    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector>;

    fn is_convex(&self) -> bool;
}

impl<G: Nonsmooth + ?Sized> Nonsmooth for Box<G> {
    fn value(&self, x: &BlockVector) -> f64 {
        (**self).value(x)
    }
    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        (**self).prox(u, step)
    }
    fn is_convex(&self) -> bool {
        (**self).is_convex()
    }
}

impl<G: Nonsmooth + ?Sized> Nonsmooth for Arc<G> {
    fn value(&self, x: &BlockVector) -> f64 {
        (**self).value(x)
    }
    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        (**self).prox(u, step)
    }
    fn is_convex(&self) -> bool {
        (**self).is_convex()
    }
}

/// Per-block stepsizes `gamma_i`; `Gamma = blockdiag(gamma_i I_{n_i})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stepsize {
    gammas: Vec<f64>,
}

impl Stepsize {
    /// Unvalidated stepsizes (only positivity is checked). Use
    /// [`Stepsize::validate`] against a problem before running a solver.
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::Config("empty stepsize list".into()));
        }
        for (i, &g) in gammas.iter().enumerate() {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidStepsize {
                    block: i,
                    gamma: g,
                    bound: f64::INFINITY,
                });
            }
        }
        Ok(Self { gammas })
    }

    pub fn uniform(n_blocks: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; n_blocks])
    }

    /// `gamma_i = alpha N / L_i`.
    pub fn fraction_of_bound<S: SmoothBlock>(problem: &Problem<S>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!("stepsize fraction {alpha} not in (0,1)")));
        }
        let n = problem.n_blocks() as f64;
        Self::new(problem.blocks.iter().map(|b| alpha * n / b.lipschitz()).collect())
    }

    /// The default `gamma_i = 0.95 N / L_i`.
    pub fn default_for<S: SmoothBlock>(problem: &Problem<S>) -> Result<Self> {
        Self::fraction_of_bound(problem, DEFAULT_STEPSIZE_FRACTION)
    }

    /// Checks `0 < gamma_i < N / L_i` with a relative margin of [`STEPSIZE_MARGIN`].
    pub fn validate_against(&self, lipschitz: &[f64]) -> Result<()> {
        if lipschitz.len() != self.gammas.len() {
            return Err(Error::DimensionMismatch {
                expected: lipschitz.len(),
                actual: self.gammas.len(),
            });
        }
        let n = self.gammas.len() as f64;
        for (i, (&g, &l)) in self.gammas.iter().zip(lipschitz).enumerate() {
            let bound = n / l;
            if !(g > 0.0 && g * l < n * (1.0 - STEPSIZE_MARGIN)) {
                return Err(Error::InvalidStepsize {
                    block: i,
                    gamma: g,
                    bound,
                });
            }
        }
        Ok(())
    }

    pub fn validate<S: SmoothBlock>(&self, problem: &Problem<S>) -> Result<()> {
        self.validate_against(&problem.lipschitz_constants())
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn gamma(&self, block: usize) -> f64 {
        self.gammas[block]
    }

    pub fn n_blocks(&self) -> usize {
        self.gammas.len()
    }

    /// Weights of the `Gamma^{-1}` metric.
    pub fn inverse_weights(&self) -> Vec<f64> {
        self.gammas.iter().map(|g| 1.0 / g).collect()
    }

    /// `hat gamma = (sum_i 1/gamma_i)^{-1}`.
    pub fn harmonic_aggregate(&self) -> f64 {
        1.0 / self.gammas.iter().map(|g| 1.0 / g).sum::<f64>()
    }

    /// `tilde gamma = sum_i gamma_i`.
    pub fn sum(&self) -> f64 {
        self.gammas.iter().sum()
    }

    /// `xi_i = (N - gamma_i L_i) / N`.
    pub fn descent_constants(&self, lipschitz: &[f64]) -> Vec<f64> {
        let n = self.gammas.len() as f64;
        self.gammas
            .iter()
            .zip(lipschitz)
            .map(|(g, l)| (n - g * l) / n)
            .collect()
    }
}

/// `Phi(x) = (1/N) sum_i f_i(x_i) + G(x)`.
pub struct Problem<S = Box<dyn SmoothBlock>> {
    pub structure: Arc<BlockStructure>,
    pub blocks: Vec<S>,
    pub nonsmooth: Box<dyn Nonsmooth>,
}

impl<S: SmoothBlock> Problem<S> {
    pub fn new(blocks: Vec<S>, nonsmooth: Box<dyn Nonsmooth>) -> Result<Self> {
        let structure = BlockStructure::new(blocks.iter().map(|b| b.dim()).collect())?;
        for (i, b) in blocks.iter().enumerate() {
            let (l, mu) = (b.lipschitz(), b.strong_convexity());
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!(
                    "block {i}: Lipschitz constant {l} must be positive"
                )));
            }
            if !(mu >= 0.0) || mu > l {
                return Err(Error::Config(format!(
                    "block {i}: strong convexity {mu} must lie in [0, L = {l}]"
                )));
            }
        }
        Ok(Self {
            structure,
            blocks,
            nonsmooth,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.lipschitz()).collect()
    }

    pub fn strong_convexity_constants(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.strong_convexity()).collect()
    }

    /// Block weights of `Lambda_F = (1/N) blockdiag(L_i I)`.
    pub fn lambda_f(&self) -> Vec<f64> {
        let n = self.n_blocks() as f64;
        self.blocks.iter().map(|b| b.lipschitz() / n).collect()
    }

    /// Block weights of `mu_F = (1/N) blockdiag(mu_i I)`.
    pub fn mu_f(&self) -> Vec<f64> {
        let n = self.n_blocks() as f64;
        self.blocks.iter().map(|b| b.strong_convexity() / n).collect()
    }

    pub fn all_strongly_convex(&self) -> bool {
        self.blocks.iter().all(|b| b.strong_convexity() > 0.0)
    }

    /// `Phi(x) = F(x) + G(x)`.
    pub fn objective(&self, x: &BlockVector) -> Result<f64> {
        Ok(eval_f(self, x)? + self.nonsmooth.value(x))
    }
}

/// `F(x) = (1/N) sum_i f_i(x_i)`.
pub fn eval_f<S: SmoothBlock>(p: &Problem<S>, x: &BlockVector) -> Result<f64> {
    x.ensure_conforms(&p.structure)?;
    let n = p.n_blocks() as f64;
    Ok(p.blocks
        .iter()
        .enumerate()
        .map(|(i, f)| f.value(x.block(i)))
        .sum::<f64>()
        / n)
}

/// `grad F(x)`, whose block `i` is `(1/N) grad f_i(x_i)`.
pub fn grad_f<S: SmoothBlock>(p: &Problem<S>, x: &BlockVector) -> Result<BlockVector> {
    x.ensure_conforms(&p.structure)?;
    let n = p.n_blocks() as f64;
    let mut g = BlockVector::zeros(&p.structure);
    for (i, f) in p.blocks.iter().enumerate() {
        let out = g.block_mut(i);
        f.gradient(x.block(i), out);
        for v in out.iter_mut() {
            *v /= n;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: i,
                what: "gradient",
            });
        }
    }
    Ok(g)
}

/// Forward point `x - Gamma grad F(x)`.
pub fn forward_point<S: SmoothBlock>(p: &Problem<S>, x: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
    let mut g = grad_f(p, x)?;
    for i in 0..p.n_blocks() {
        let gamma = step.gamma(i);
        for (gi, xi) in g.block_mut(i).iter_mut().zip(x.block(i)) {
            *gi = xi - gamma * *gi;
        }
    }
    Ok(g)
}
