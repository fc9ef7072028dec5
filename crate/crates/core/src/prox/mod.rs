//! Closed-form proximal atoms and a brute-force reference oracle.

mod atoms;
mod brute;

pub use atoms::ProxAtom;
pub use brute::{brute_force_minimize, brute_force_prox, GridSpec, MAX_BRUTE_FORCE_DIM};

/// `prox_{t psi}(u)` for a closed-form atom.
pub fn apply_atom(atom: &ProxAtom, u: &[f64], t: f64) -> crate::Result<Vec<f64>> {
    atom.apply(u, t)
}
