//! Gradient-oracle interior point method with adaptive rank-1 preconditioning.
//!
//! The solver keeps an explicit preconditioner `H̃` (and its inverse) and improves it
//! only when a Richardson step fails to make progress, using the failing residual as a
//! certificate that `H̃⁻¹H` is far from the identity. The robust variant touches the
//! Hessian only through gradient differences.

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod barriers;
pub mod cli;
pub mod error;
pub mod excentricity;
pub mod ipm;
pub mod linalg;
pub mod linear;
pub mod oracle;
pub mod sdp;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{SymMatrix, Vector};
