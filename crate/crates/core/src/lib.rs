//! Block-coordinate forward-backward methods for problems of the form
//!
//! ```text
//! minimize  Phi(x) = (1/N) sum_i f_i(x_i) + G(x)
//! ```
//!
//! with smooth (possibly nonconvex) blocks `f_i` and a nonsmooth, possibly
//! nonseparable `G`. The forward-backward envelope is used throughout as a
//! computable Lyapunov function.

pub mod accel;
pub mod bc;
pub mod block;
pub mod error;
pub mod fbe;
pub mod incremental;
pub mod problem;
pub mod prox;
pub mod rates;
pub mod sampling;
pub mod smooth;
pub mod structured;

pub use block::{norm_in_metric, norm_sq_in_metric, BlockStructure, BlockVector};
pub use error::{Error, Result};
pub use fbe::{fbe_value, forward_backward, model_value, FbeReport};
pub use problem::{eval_f, grad_f, Nonsmooth, Problem, SmoothBlock, Stepsize};
