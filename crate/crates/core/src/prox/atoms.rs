use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separable regularizers with closed-form proximal mappings.
///
/// Every atom acts componentwise on `R^n`; `value` sums over components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxAtom {
    Zero,
    L1 { lambda: f64 },
    L0 { lambda: f64 },
    Box { lo: f64, hi: f64 },
    IndicatorNonneg,
    IndicatorPoint { c: f64 },
    Quadratic { a: f64 },
}

impl ProxAtom {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProxAtom::L1 { lambda } | ProxAtom::L0 { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => Err(
                Error::Config(format!("regularization weight {lambda} must be nonnegative")),
            ),
            ProxAtom::Box { lo, hi } if !(lo <= hi) || lo == f64::INFINITY || hi == f64::NEG_INFINITY => {
                Err(Error::Config(format!("empty box [{lo}, {hi}]")))
            }
            ProxAtom::IndicatorPoint { c } if !c.is_finite() => {
                Err(Error::Config(format!("indicator point {c} must be finite")))
            }
            ProxAtom::Quadratic { a } if !(a >= 0.0 && a.is_finite()) => {
                Err(Error::Config(format!("quadratic weight {a} must be nonnegative")))
            }
            _ => Ok(()),
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, ProxAtom::L0 { lambda } if *lambda > 0.0)
    }

    /// Whether the atom jumps at the boundary of some set (indicators and `l0`),
    /// so that rounding errors in computed points change its value.
    pub fn is_discontinuous(&self) -> bool {
        self.is_indicator() || matches!(self, ProxAtom::L0 { lambda } if *lambda > 0.0)
    }

    /// Whether the atom is the indicator of a set (values in `{0, +inf}`).
    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            ProxAtom::Box { .. } | ProxAtom::IndicatorNonneg | ProxAtom::IndicatorPoint { .. }
        )
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        self.value_with_tolerance(w, 0.0)
    }

    /// Like [`ProxAtom::value`], but indicator constraints accept points
    /// within `tol` of the set and `l0` counts only entries above `tol`.
    pub fn value_with_tolerance(&self, w: &[f64], tol: f64) -> f64 {
        let inside = |ok: bool| if ok { 0.0 } else { f64::INFINITY };
        match *self {
            ProxAtom::Zero => 0.0,
            ProxAtom::L1 { lambda } => lambda * w.iter().map(|x| x.abs()).sum::<f64>(),
            ProxAtom::L0 { lambda } => lambda * w.iter().filter(|x| x.abs() > tol).count() as f64,
            ProxAtom::Box { lo, hi } => inside(w.iter().all(|&x| x >= lo - tol && x <= hi + tol)),
            ProxAtom::IndicatorNonneg => inside(w.iter().all(|&x| x >= -tol)),
            ProxAtom::IndicatorPoint { c } => inside(w.iter().all(|&x| (x - c).abs() <= tol)),
            ProxAtom::Quadratic { a } => 0.5 * a * w.iter().map(|x| x * x).sum::<f64>(),
        }
    }

    /// `prox_{t psi}(u)`, a global minimizer of `psi(w) + ||w - u||^2 / (2t)`.
    ///
    /// For `l0` at the threshold `|u_j| = sqrt(2 t lambda)` both `0` and `u_j`
    /// are minimizers; `0` (the smaller norm) is returned.
    pub fn apply(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = u.to_vec();
        self.apply_in_place(&mut out, t)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, u: &mut [f64], t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Contract(format!("prox stepsize {t} must be positive")));
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                block: 0,
                what: "prox input",
            });
        }
        match *self {
            ProxAtom::Zero => {}
            ProxAtom::L1 { lambda } => {
                let thr = t * lambda;
                for x in u.iter_mut() {
                    *x = x.signum() * (x.abs() - thr).max(0.0);
                }
            }
            ProxAtom::L0 { lambda } => {
                for x in u.iter_mut() {
                    // keep x only if lambda < x^2 / (2t); ties go to 0
                    if !(lambda < *x * *x / (2.0 * t)) {
                        *x = 0.0;
                    }
                }
            }
            ProxAtom::Box { lo, hi } => {
                for x in u.iter_mut() {
                    *x = x.clamp(lo, hi);
                }
            }
            ProxAtom::IndicatorNonneg => {
                for x in u.iter_mut() {
                    *x = x.max(0.0);
                }
            }
            ProxAtom::IndicatorPoint { c } => u.fill(c),
            ProxAtom::Quadratic { a } => {
                let s = 1.0 / (1.0 + t * a);
                for x in u.iter_mut() {
                    *x *= s;
                }
            }
        }
        // signum(0.0) * 0 yields 0, but -0.0 inputs may survive; normalize
        for x in u.iter_mut() {
            if *x == 0.0 {
                *x = 0.0;
            }
        }
        Ok(())
    }

    /// Proximal objective `psi(w) + ||w - u||^2 / (2t)`.
    pub fn prox_objective(&self, w: &[f64], u: &[f64], t: f64) -> f64 {
        self.value(w) + sq_dist(w, u) / (2.0 * t)
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold() {
        let w = ProxAtom::L1 { lambda: 1.0 }.apply(&[3.0, -0.5, -4.0], 1.0).unwrap();
        assert_eq!(w, vec![2.0, 0.0, -3.0]);
    }

    #[test]
    fn hard_threshold_tie_goes_to_zero() {
        // boundary |u| = sqrt(2 t lambda) = 1
        let atom = ProxAtom::L0 { lambda: 1.0 };
        assert_eq!(atom.apply(&[1.0], 0.5).unwrap(), vec![0.0]);
        assert_eq!(atom.apply(&[-1.0], 0.5).unwrap(), vec![0.0]);
        assert_eq!(atom.apply(&[1.0 + 1e-12], 0.5).unwrap(), vec![1.0 + 1e-12]);
        // both candidates have equal objective at the tie
        let t = 0.5;
        let u = [1.0];
        assert_eq!(atom.prox_objective(&[0.0], &u, t), atom.prox_objective(&u, &u, t));
    }

    #[test]
    fn projections() {
        let b = ProxAtom::Box {
            lo: 0.0,
            hi: f64::INFINITY,
        };
        assert_eq!(b.apply(&[-2.0], 7.3).unwrap(), vec![0.0]);
        assert_eq!(
            ProxAtom::IndicatorNonneg.apply(&[-1.0, 2.0], 1.0).unwrap(),
            vec![0.0, 2.0]
        );
        assert_eq!(
            ProxAtom::IndicatorPoint { c: 0.0 }.apply(&[5.0, -3.0], 1.0).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn quadratic_shrinks() {
        let w = ProxAtom::Quadratic { a: 2.0 }.apply(&[3.0], 1.0).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn validation() {
        assert!(ProxAtom::L1 { lambda: -1.0 }.validate().is_err());
        assert!(ProxAtom::Box { lo: 1.0, hi: 0.0 }.validate().is_err());
        assert!(ProxAtom::Quadratic { a: -0.1 }.validate().is_err());
        assert!(ProxAtom::Box {
            lo: 0.0,
            hi: f64::INFINITY
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn non_finite_input_and_bad_step_are_rejected() {
        assert!(ProxAtom::Zero.apply(&[f64::NAN], 1.0).is_err());
        assert!(ProxAtom::Zero.apply(&[1.0], 0.0).is_err());
    }

    #[test]
    fn convexity_flags() {
        assert!(!ProxAtom::L0 { lambda: 1.0 }.is_convex());
        assert!(ProxAtom::L0 { lambda: 0.0 }.is_convex());
        assert!(ProxAtom::L1 { lambda: 1.0 }.is_convex());
    }
}
