//! Numerical core for homogenization of the random conductance model.
//!
//! The crate is `no_std` (with `alloc`) and contains only algorithms:
//!
//! * [`env`]: seedable conductance environments on boxes and tori,
//! * [`lattice`]: grid functions on the rescaled box and the assembled
//!   operator `-L^eps (+ V)`,
//! * [`solve`]: Poisson and eigenvalue solvers, plus finite-difference
//!   references for the effective constant-coefficient problem,
//! * [`corrector`]: periodic cell problems and the homogenized matrix,
//! * [`paths`] and [`audit`]: path-optimized measures and inequality audits,
//! * [`walker`]: the variable-speed random walk, local times and the
//!   spectral cumulant.
//!
//! Throughout, the effective generator is `L_eff u = (1/2) div(A_hom grad u)`,
//! i.e. the effective diffusion matrix is `D_eff = A_hom / 2`.

#![no_std]
// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audit;
pub mod corrector;
pub mod env;
mod error;
pub(crate) mod hash;
pub mod lattice;
pub mod paths;
pub mod site;
pub mod solve;
pub mod sparse;
pub mod walker;

pub use error::{Error, Result};
pub use site::{EdgeId, Site, MAX_DIM};
