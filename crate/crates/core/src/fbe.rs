//! The forward-backward operator `T`, the forward-backward envelope (FBE)
//! and the majorizing model it minimizes.
//!
//! For a stepsize metric `Gamma` the model at `x` is
//!
//! ```text
//! M(w, x) = F(x) + <grad F(x), w - x> + G(w) + 1/2 ||w - x||^2_{Gamma^{-1}}
//! ```
//!
//! `T(x)` is its set of minimizers and the FBE `phi_Gamma(x)` its minimum
//! value. The envelope is always evaluated at the concrete `z` returned by
//! the prox, so it is exact for whichever minimizer the prox selects.

use crate::block::{norm_sq_in_metric, BlockVector};
use crate::error::{Error, Result};
use crate::problem::{eval_f, grad_f, Problem, SmoothBlock, Stepsize};

/// Diagnostics of one forward-backward evaluation at `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbeReport {
    /// The element of `T(x)` returned by the prox.
    pub z: BlockVector,
    /// `phi_Gamma(x)`.
    pub fbe: f64,
    /// `Phi(z) = F(z) + G(z)`.
    pub phi_z: f64,
    /// `||x - z||_{Gamma^{-1}}`.
    pub residual: f64,
    /// Unweighted `||x - z||`.
    pub residual_euclidean: f64,
    /// `xi_i = (N - gamma_i L_i) / N`.
    pub xi: Vec<f64>,
}

/// `z = prox_G^{Gamma^{-1}}(x - Gamma grad F(x))`.
pub fn forward_backward<S: SmoothBlock>(p: &Problem<S>, x: &BlockVector, step: &Stepsize) -> Result<BlockVector> {
    let fwd = crate::problem::forward_point(p, x, step)?;
    p.nonsmooth.prox(&fwd, step)
}

/// Evaluates the FBE at `x` together with `z`, `Phi(z)` and the residual.
pub fn fbe_value<S: SmoothBlock>(p: &Problem<S>, x: &BlockVector, step: &Stepsize) -> Result<FbeReport> {
    let grad = grad_f(p, x)?;
    let mut fwd = grad.clone();
    for i in 0..p.n_blocks() {
        let gamma = step.gamma(i);
        for (f, xi) in fwd.block_mut(i).iter_mut().zip(x.block(i)) {
            *f = xi - gamma * *f;
        }
    }
    let z = p.nonsmooth.prox(&fwd, step)?;
    report_at(p, x, &grad, z, step)
}

/// Builds the report for a `z` already known to lie in `T(x)`.
pub(crate) fn report_at<S: SmoothBlock>(
    p: &Problem<S>,
    x: &BlockVector,
    grad: &BlockVector,
    z: BlockVector,
    step: &Stepsize,
) -> Result<FbeReport> {
    let g_z = p.nonsmooth.value(&z);
    if !g_z.is_finite() {
        return Err(Error::Contract("prox returned a point where G is not finite".into()));
    }
    let inv = step.inverse_weights();
    let diff = z.sub(x);
    let res_sq = norm_sq_in_metric(&diff, &inv)?;
    let f_x = eval_f(p, x)?;
    let fbe = f_x + grad.dot(&diff) + g_z + 0.5 * res_sq;
    let phi_z = eval_f(p, &z)? + g_z;
    Ok(FbeReport {
        fbe,
        phi_z,
        residual: res_sq.sqrt(),
        residual_euclidean: diff.norm(),
        xi: step.descent_constants(&p.lipschitz_constants()),
        z,
    })
}

/// `M(w, x)`; may be `+inf` when `G(w)` is.
pub fn model_value<S: SmoothBlock>(p: &Problem<S>, w: &BlockVector, x: &BlockVector, step: &Stepsize) -> Result<f64> {
    w.ensure_conforms(&p.structure)?;
    let g_w = p.nonsmooth.value(w);
    if g_w == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let grad = grad_f(p, x)?;
    let diff = w.sub(x);
    let res_sq = norm_sq_in_metric(&diff, &step.inverse_weights())?;
    Ok(eval_f(p, x)? + grad.dot(&diff) + g_w + 0.5 * res_sq)
}
