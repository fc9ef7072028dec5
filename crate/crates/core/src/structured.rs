//! Nonsmooth terms `G` built from a small atom `g`: separable sums, the
//! consensus formulation of finite-sum problems, and sharing compositions
//! `G = g o A`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::problem::{Nonsmooth, Stepsize};
use crate::prox::ProxAtom;

/// Absolute tolerance (scaled by the iterate magnitude) used when evaluating
/// discontinuous atoms (indicators, `l0`) of linear images at computed points.
pub const FEASIBILITY_TOL: f64 = 1e-9;

fn check_step(u: &BlockVector, step: &Stepsize) -> Result<()> {
    if step.n_blocks() != u.n_blocks() {
        return Err(Error::DimensionMismatch {
            expected: u.n_blocks(),
            actual: step.n_blocks(),
        });
    }
    Ok(())
}

fn common_dim(u: &BlockVector) -> Result<usize> {
    u.structure()
        .common_dim()
        .ok_or_else(|| Error::InvalidStructure("all blocks must share one dimension".into()))
}

/// `G(x) = sum_i psi(x_i)` for a separable atom `psi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableG {
    pub atom: ProxAtom,
}

impl SeparableG {
    pub fn new(atom: ProxAtom) -> Result<Self> {
        atom.validate()?;
        Ok(Self { atom })
    }

    pub fn zero() -> Self {
        Self { atom: ProxAtom::Zero }
    }
}

impl Nonsmooth for SeparableG {
    fn value(&self, x: &BlockVector) -> f64 {
        self.atom.value(x.as_slice())
    }

    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        check_step(u, step)?;
        let mut out = u.clone();
        for i in 0..u.n_blocks() {
            self.atom.apply_in_place(out.block_mut(i), step.gamma(i))?;
        }
        Ok(out)
    }

    fn is_convex(&self) -> bool {
        self.atom.is_convex()
    }
}

/// `G(x) = (1/N) sum_i g(x_i) + indicator_C(x)` with `C` the consensus set
/// `x_1 = ... = x_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusG {
    pub g: ProxAtom,
    pub dim: usize,
}

/// Aggregates of a consensus prox: `hat gamma = (sum 1/gamma_i)^{-1}` and
/// `hat u = hat gamma sum_i u_i / gamma_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusCenter {
    pub gamma_hat: f64,
    pub u_hat: Vec<f64>,
}

impl ConsensusG {
    pub fn new(g: ProxAtom, dim: usize) -> Result<Self> {
        g.validate()?;
        if dim == 0 {
            return Err(Error::InvalidStructure("zero block dimension".into()));
        }
        Ok(Self { g, dim })
    }

    pub fn center(u: &BlockVector, step: &Stepsize) -> Result<ConsensusCenter> {
        check_step(u, step)?;
        let n = common_dim(u)?;
        let gamma_hat = step.harmonic_aggregate();
        let mut u_hat = vec![0.0; n];
        for i in 0..u.n_blocks() {
            let w = 1.0 / step.gamma(i);
            for (acc, x) in u_hat.iter_mut().zip(u.block(i)) {
                *acc += w * x;
            }
        }
        for v in u_hat.iter_mut() {
            *v *= gamma_hat;
        }
        Ok(ConsensusCenter { gamma_hat, u_hat })
    }

    /// `prox_G^{Gamma^{-1}}(u) = (v, ..., v)` with `v = prox_{hat gamma g}(hat u)`.
    pub fn prox_with_center(&self, u: &BlockVector, step: &Stepsize) -> Result<(BlockVector, ConsensusCenter)> {
        let center = Self::center(u, step)?;
        if center.u_hat.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: center.u_hat.len(),
            });
        }
        let v = self.g.apply(&center.u_hat, center.gamma_hat)?;
        let out = BlockVector::repeated(u.structure(), &v)?;
        Ok((out, center))
    }
}

impl Nonsmooth for ConsensusG {
    fn value(&self, x: &BlockVector) -> f64 {
        let first = x.block(0);
        if x.blocks().all(|b| b == first) {
            self.g.value(first)
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        self.prox_with_center(u, step).map(|(v, _)| v)
    }

    fn is_convex(&self) -> bool {
        self.g.is_convex()
    }
}

/// `G(x) = g(sum_i x_i)`, i.e. `g o A` with `A = [I ... I]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharingG {
    pub g: ProxAtom,
    pub dim: usize,
}

/// Aggregates of a sharing prox: `tilde gamma = sum gamma_i`,
/// `tilde u = sum u_i` and the multiplier `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingAggregate {
    pub gamma_tilde: f64,
    pub u_tilde: Vec<f64>,
    pub w: Vec<f64>,
}

impl SharingG {
    pub fn new(g: ProxAtom, dim: usize) -> Result<Self> {
        g.validate()?;
        if dim == 0 {
            return Err(Error::InvalidStructure("zero block dimension".into()));
        }
        Ok(Self { g, dim })
    }

    /// `w = (prox_{tilde gamma g}(tilde u) - tilde u) / tilde gamma`.
    pub fn multiplier(&self, u_tilde: &[f64], gamma_tilde: f64) -> Result<Vec<f64>> {
        let p = self.g.apply(u_tilde, gamma_tilde)?;
        Ok(p.iter().zip(u_tilde).map(|(p, u)| (p - u) / gamma_tilde).collect())
    }

    /// `v_i = u_i + gamma_i w`.
    pub fn prox_with_aggregate(&self, u: &BlockVector, step: &Stepsize) -> Result<(BlockVector, SharingAggregate)> {
        check_step(u, step)?;
        let n = common_dim(u)?;
        if n != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: n,
            });
        }
        let mut u_tilde = vec![0.0; n];
        for b in u.blocks() {
            for (acc, x) in u_tilde.iter_mut().zip(b) {
                *acc += x;
            }
        }
        let gamma_tilde = step.sum();
        let w = self.multiplier(&u_tilde, gamma_tilde)?;
        let mut out = u.clone();
        for i in 0..u.n_blocks() {
            let g = step.gamma(i);
            for (o, wj) in out.block_mut(i).iter_mut().zip(&w) {
                *o += g * wj;
            }
        }
        Ok((
            out,
            SharingAggregate {
                gamma_tilde,
                u_tilde,
                w,
            },
        ))
    }
}

impl Nonsmooth for SharingG {
    fn value(&self, x: &BlockVector) -> f64 {
        let mut sum = vec![0.0; self.dim];
        let mut scale = 1.0;
        for b in x.blocks() {
            for (acc, v) in sum.iter_mut().zip(b) {
                *acc += v;
                scale += v.abs();
            }
        }
        let tol = if self.g.is_discontinuous() {
            FEASIBILITY_TOL * scale
        } else {
            0.0
        };
        self.g.value_with_tolerance(&sum, tol)
    }

    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        self.prox_with_aggregate(u, step).map(|(v, _)| v)
    }

    fn is_convex(&self) -> bool {
        self.g.is_convex()
    }
}

/// Indicator of `sum_i A_i x_i = 0` with `A = [A_1 ... A_N]` of full row rank.
///
/// The matrix `A Gamma A^T` is factored once for the stepsize given at
/// construction; proxes with other stepsizes factor on the fly.
#[derive(Debug, Clone)]
pub struct GeneralizedSharingG {
    a: Vec<DMatrix<f64>>,
    rows: usize,
    gammas: Vec<f64>,
    factor: Cholesky<f64, Dyn>,
}

/// Smallest singular value accepted for `A`.
pub const FULL_RANK_TOL: f64 = 1e-10;

impl GeneralizedSharingG {
    pub fn new(a: Vec<DMatrix<f64>>, step: &Stepsize) -> Result<Self> {
        if a.is_empty() || a.len() != step.n_blocks() {
            return Err(Error::Config(format!(
                "need one coupling matrix per block ({} matrices, {} stepsizes)",
                a.len(),
                step.n_blocks()
            )));
        }
        let rows = a[0].nrows();
        if rows == 0 || a.iter().any(|m| m.nrows() != rows || m.ncols() == 0) {
            return Err(Error::Config(
                "coupling matrices must share a positive row count".into(),
            ));
        }
        let cols: usize = a.iter().map(|m| m.ncols()).sum();
        let mut full = DMatrix::zeros(rows, cols);
        let mut off = 0;
        for m in &a {
            full.view_mut((0, off), (rows, m.ncols())).copy_from(m);
            off += m.ncols();
        }
        let smin = if rows > cols { 0.0 } else { full.singular_values().min() };
        if !(smin > FULL_RANK_TOL) {
            return Err(Error::Config(format!(
                "coupling matrix is rank deficient (smallest singular value {smin:e})"
            )));
        }
        let factor = Self::factor(&a, step.gammas())?;
        Ok(Self {
            a,
            rows,
            gammas: step.gammas().to_vec(),
            factor,
        })
    }

    fn factor(a: &[DMatrix<f64>], gammas: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        let rows = a[0].nrows();
        let mut m = DMatrix::zeros(rows, rows);
        for (ai, g) in a.iter().zip(gammas) {
            m += ai * ai.transpose() * *g;
        }
        Cholesky::new(m).ok_or_else(|| Error::Config("A Gamma A^T is not positive definite".into()))
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    /// `sum_i A_i x_i`.
    pub fn residual(&self, x: &BlockVector) -> DVector<f64> {
        let mut r = DVector::zeros(self.rows);
        for (i, ai) in self.a.iter().enumerate() {
            r += ai * DVector::from_column_slice(x.block(i));
        }
        r
    }

    fn check_layout(&self, u: &BlockVector) -> Result<()> {
        if u.n_blocks() != self.a.len() {
            return Err(Error::DimensionMismatch {
                expected: self.a.len(),
                actual: u.n_blocks(),
            });
        }
        for (i, ai) in self.a.iter().enumerate() {
            if ai.ncols() != u.structure().dim(i) {
                return Err(Error::DimensionMismatch {
                    expected: ai.ncols(),
                    actual: u.structure().dim(i),
                });
            }
        }
        Ok(())
    }
}

impl Nonsmooth for GeneralizedSharingG {
    fn value(&self, x: &BlockVector) -> f64 {
        if self.check_layout(x).is_err() {
            return f64::INFINITY;
        }
        let scale: f64 = 1.0
            + self
                .a
                .iter()
                .enumerate()
                .map(|(i, ai)| (ai * DVector::from_column_slice(x.block(i))).abs().sum())
                .sum::<f64>();
        if self.residual(x).amax() <= FEASIBILITY_TOL * scale {
            0.0
        } else {
            f64::INFINITY
        }
    }

    /// `v_i = u_i - gamma_i A_i^T (A Gamma A^T)^{-1} sum_j A_j u_j`.
    fn prox(&self, u: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
        check_step(u, step)?;
        self.check_layout(u)?;
        let b = self.residual(u);
        let y = if step.gammas() == self.gammas.as_slice() {
            self.factor.solve(&b)
        } else {
            Self::factor(&self.a, step.gammas())?.solve(&b)
        };
        let mut out = u.clone();
        for (i, ai) in self.a.iter().enumerate() {
            let corr = ai.transpose() * &y * step.gamma(i);
            for (o, c) in out.block_mut(i).iter_mut().zip(corr.iter()) {
                *o -= c;
            }
        }
        Ok(out)
    }

    fn is_convex(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(blocks: &[&[f64]]) -> BlockVector {
        BlockVector::from_blocks(blocks).unwrap()
    }

    #[test]
    fn consensus_unweighted_average() {
        let g = ConsensusG::new(ProxAtom::Zero, 1).unwrap();
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let (v, c) = g.prox_with_center(&bv(&[&[1.0], &[3.0]]), &step).unwrap();
        assert_eq!(c.u_hat, vec![2.0]);
        assert_eq!(v.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn consensus_projection() {
        let g = ConsensusG::new(ProxAtom::IndicatorNonneg, 1).unwrap();
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let (v, c) = g.prox_with_center(&bv(&[&[-1.0], &[-3.0]]), &step).unwrap();
        assert_eq!(c.u_hat, vec![-2.0]);
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn consensus_weighted_mean() {
        let g = ConsensusG::new(ProxAtom::Zero, 1).unwrap();
        let step = Stepsize::new(vec![1.0, 3.0]).unwrap();
        let (v, c) = g.prox_with_center(&bv(&[&[1.0], &[3.0]]), &step).unwrap();
        assert!((c.gamma_hat - 0.75).abs() < 1e-15);
        assert!((c.u_hat[0] - 1.5).abs() < 1e-15);
        assert!((v.block(0)[0] - 1.5).abs() < 1e-15);
        assert_eq!(v.block(0), v.block(1));
    }

    #[test]
    fn consensus_value_off_the_diagonal_is_infinite() {
        let g = ConsensusG::new(ProxAtom::L1 { lambda: 1.0 }, 1).unwrap();
        assert_eq!(g.value(&bv(&[&[1.0], &[2.0]])), f64::INFINITY);
        assert_eq!(g.value(&bv(&[&[-2.0], &[-2.0]])), 2.0);
    }

    #[test]
    fn sharing_identity_for_zero_g() {
        let g = SharingG::new(ProxAtom::Zero, 1).unwrap();
        let step = Stepsize::new(vec![0.3, 2.0]).unwrap();
        let u = bv(&[&[1.5], &[-4.0]]);
        let (v, agg) = g.prox_with_aggregate(&u, &step).unwrap();
        assert_eq!(v, u);
        assert_eq!(agg.w, vec![0.0]);
    }

    #[test]
    fn sharing_zero_sum_projection() {
        let g = SharingG::new(ProxAtom::IndicatorPoint { c: 0.0 }, 1).unwrap();
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let (v, agg) = g.prox_with_aggregate(&bv(&[&[1.0], &[3.0]]), &step).unwrap();
        assert_eq!(agg.u_tilde, vec![4.0]);
        assert_eq!(agg.w, vec![-2.0]);
        assert_eq!(v.as_slice(), &[-1.0, 1.0]);
        assert_eq!(g.value(&v), 0.0);
    }

    #[test]
    fn sharing_l1() {
        let g = SharingG::new(ProxAtom::L1 { lambda: 1.0 }, 1).unwrap();
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let (v, agg) = g.prox_with_aggregate(&bv(&[&[2.0], &[2.0]]), &step).unwrap();
        assert_eq!(agg.gamma_tilde, 2.0);
        assert_eq!(agg.w, vec![-1.0]);
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn generalized_sharing_example() {
        let a = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)];
        let step = Stepsize::uniform(2, 1.0).unwrap();
        let g = GeneralizedSharingG::new(a, &step).unwrap();
        let v = g.prox(&bv(&[&[1.0], &[1.0]]), &step).unwrap();
        assert!((v.block(0)[0] - 0.4).abs() < 1e-14);
        assert!((v.block(1)[0] + 0.2).abs() < 1e-14);
        assert!(g.residual(&v).amax() < 1e-14);
    }

    #[test]
    fn generalized_sharing_fixes_feasible_points() {
        let a = vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)];
        let step = Stepsize::new(vec![0.5, 1.5]).unwrap();
        let g = GeneralizedSharingG::new(a, &step).unwrap();
        let u = bv(&[&[2.0], &[-1.0]]);
        assert_eq!(g.prox(&u, &step).unwrap(), u);
    }

    #[test]
    fn generalized_sharing_reduces_to_zero_sum_sharing() {
        let a = vec![DMatrix::identity(2, 2); 3];
        let step = Stepsize::new(vec![0.5, 1.0, 2.0]).unwrap();
        let gen = GeneralizedSharingG::new(a, &step).unwrap();
        let sh = SharingG::new(ProxAtom::IndicatorPoint { c: 0.0 }, 2).unwrap();
        let u = bv(&[&[1.0, -2.0], &[0.5, 3.0], &[-4.0, 0.25]]);
        let v1 = gen.prox(&u, &step).unwrap();
        let v2 = sh.prox(&u, &step).unwrap();
        assert!(v1.max_abs_diff(&v2) < 1e-13);
    }

    #[test]
    fn generalized_sharing_rejects_rank_deficient_coupling() {
        let a = vec![
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[2.0, 2.0]),
        ];
        let step = Stepsize::uniform(2, 1.0).unwrap();
        assert!(matches!(GeneralizedSharingG::new(a, &step), Err(Error::Config(_))));
    }
}
