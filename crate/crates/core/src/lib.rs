//! Synthesis of minimum-effort, maximum-impact stealthy attacks against the
//! sustainability cost of a linear control loop, and measurement of their
//! impact against an LQR baseline.
//!
//! The pipeline is: [`lqr`] computes the defender's nominal gain, [`gad`] runs
//! alternating descent on the gain and ascent on the attack using the adjoint
//! gradients from [`adjoint`], and [`stealth`] scales the resulting attack so
//! the residual detector never fires. [`scenario`] wires it to config files,
//! CSV output and the `sta` command line tool.

pub mod adjoint;
pub mod cost;
pub mod cps;
pub mod error;
pub mod gad;
mod linalg;
pub mod lqr;
pub mod scenario;
pub mod stealth;

pub use error::{Result, StaError};
