//! Concrete smooth block functions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::problem::SmoothBlock;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// `f(x) = 1/2 x^T H x + q^T x` with `H` symmetric positive semidefinite.
///
/// `L = lambda_max(H)` and `mu = lambda_min(H)` are computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBlock {
    h: DMatrix<f64>,
    q: DVector<f64>,
    lipschitz: f64,
    mu: f64,
}

impl QuadraticBlock {
    pub fn new(h: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        if h.nrows() != n || h.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: h.nrows(),
            });
        }
        let asym = (&h - h.transpose()).amax();
        if asym > SYMMETRY_TOL * (1.0 + h.amax()) {
            return Err(Error::Config(format!(
                "quadratic block not symmetric (asymmetry {asym:e})"
            )));
        }
        let eig = SymmetricEigen::new(h.clone()).eigenvalues;
        let lmax = eig.max();
        let mut lmin = eig.min();
        if lmin < -PSD_TOL {
            return Err(Error::Config(format!(
                "quadratic block is indefinite (lambda_min = {lmin:e})"
            )));
        }
        // Rounding-level eigenvalues are reported as exact zeros; mu = 0 is always a valid modulus.
        if lmin <= PSD_TOL * (1.0 + lmax.abs()) {
            lmin = 0.0;
        }
        Ok(Self {
            h,
            q,
            lipschitz: lmax,
            mu: lmin,
        })
    }

    /// `f(x) = (a/2) ||x||^2 + q^T x`.
    pub fn isotropic(a: f64, q: Vec<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(DMatrix::from_diagonal_element(n, n, a), DVector::from_vec(q))
    }

    pub fn from_rows(rows: &[&[f64]], q: &[f64]) -> Result<Self> {
        let n = q.len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if flat.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: flat.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, &flat), DVector::from_column_slice(q))
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.q
    }
}

impl SmoothBlock for QuadraticBlock {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.q.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut hx = 0.0;
            for j in 0..n {
                hx += self.h[(i, j)] * x[j];
            }
            acc += x[i] * (0.5 * hx + self.q[i]);
        }
        acc
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.q.len();
        for i in 0..n {
            let mut hx = self.q[i];
            for j in 0..n {
                hx += self.h[(i, j)] * x[j];
            }
            out[i] = hx;
        }
    }

    fn lipschitz(&self) -> f64 {
        // a zero Hessian still needs a positive modulus for the stepsize bound
        self.lipschitz.max(f64::MIN_POSITIVE)
    }

    fn strong_convexity(&self) -> f64 {
        self.mu
    }
}

/// `f(x) = (a/2) ||x||^2 + b sum_j sin(x_j) + c^T x`, nonconvex when `|b| > a`.
///
/// The Hessian is `diag(a - b sin(x_j))`, so `L = a + |b|` is a valid modulus
/// and `mu = a - |b|` when positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SineQuadraticBlock {
    pub a: f64,
    pub b: f64,
    pub c: Vec<f64>,
}

impl SineQuadraticBlock {
    pub fn new(a: f64, b: f64, c: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a + b.abs() <= 0.0 || c.is_empty() {
            return Err(Error::Config(format!(
                "invalid sine-quadratic block (a = {a}, b = {b})"
            )));
        }
        Ok(Self { a, b, c })
    }
}

impl SmoothBlock for SineQuadraticBlock {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.c)
            .map(|(xj, cj)| 0.5 * self.a * xj * xj + self.b * xj.sin() + cj * xj)
            .sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xj), cj) in out.iter_mut().zip(x).zip(&self.c) {
            *o = self.a * xj + self.b * xj.cos() + cj;
        }
    }

    fn lipschitz(&self) -> f64 {
        self.a + self.b.abs()
    }

    fn strong_convexity(&self) -> f64 {
        (self.a - self.b.abs()).max(0.0)
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A block function given by closures.
pub struct FnBlock {
    dim: usize,
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
    lipschitz: f64,
    mu: f64,
}

impl FnBlock {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        lipschitz: f64,
        mu: f64,
    ) -> Self {
        Self {
            dim,
            value: Box::new(value),
            gradient: Box::new(gradient),
            lipschitz,
            mu,
        }
    }
}

impl SmoothBlock for FnBlock {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        (self.gradient)(x, out)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn strong_convexity(&self) -> f64 {
        self.mu
    }
}
