//! Poisson and eigenvalue solves for the assembled operators, and the
//! finite-difference reference for the constant-coefficient limit problem.

pub mod cg;
pub mod eigen;
pub mod homogenized;

use alloc::vec::Vec;

pub use cg::{pcg, CgOptions, CgOutcome, StopRule};
pub use eigen::{sym_eigs_smallest, EigenMethod, SymEigen, DEFAULT_EIGEN_TOL, DENSE_LIMIT};
pub use homogenized::{
    check_spd, homogenized_eigs, homogenized_matrix, homogenized_solve, HomogenizedEigen, HomogenizedProblem, RefField, RefGrid,
};

use crate::lattice::{GridFunction, GridOperator};
use crate::{Error, Result};

/// Default relative residual for Poisson solves.
pub const DEFAULT_POISSON_TOL: f64 = 1e-10;

/// Solves `op u = f` by Jacobi-preconditioned CG to relative residual `tol`.
pub fn poisson_solve(op: &GridOperator, f: &GridFunction, tol: f64) -> Result<GridFunction> {
    if f.eps() != op.eps() || f.dim() != op.dim() {
        return Err(Error::Dimension { expected: op.len(), found: f.values().len() });
    }
    let opts = CgOptions { stop: StopRule::RelativeL2(tol), max_iter: cg::default_max_iter(op.len()), project_every: None };
    let out = pcg(op.matrix(), f.values(), &opts)?;
    GridFunction::from_values(op.eps(), op.dim(), out.x)
}

/// Ascending eigenvalues with `H_eps`-orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<GridFunction>,
    /// `||op psi - lambda psi|| / (|lambda| ||psi||)` per pair.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

pub fn eigs_smallest(op: &GridOperator, k: usize, tol: f64) -> Result<EigenPairs> {
    eigs_smallest_with(op, k, tol, EigenMethod::Auto)
}

pub fn eigs_smallest_with(op: &GridOperator, k: usize, tol: f64, method: EigenMethod) -> Result<EigenPairs> {
    let e = sym_eigs_smallest(op.matrix(), k, tol, method)?;
    // euclidean-unit vectors become H_eps-unit after scaling by eps^(-d/2)
    let scale = libm::pow(op.eps().n() as f64, op.dim() as f64 / 2.0);
    let vectors = e
        .vectors
        .into_iter()
        .map(|v| GridFunction::from_values(op.eps(), op.dim(), v.into_iter().map(|x| x * scale).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenPairs { values: e.values, vectors, residuals: e.residuals, iterations: e.iterations })
}
