//! Finite-difference reference solver for the constant-coefficient problem
//! `-(1/2) div(A grad u) + V u = f` on `(-1,1)^d` with zero Dirichlet data.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::cg::{pcg, CgOptions, StopRule};
use super::eigen::{sym_eigs_smallest, EigenMethod};
use crate::lattice::{ContinuumFn, NodeBox};
use crate::site::{Site, MAX_DIM};
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::{Error, Result};

const REFERENCE_TOL: f64 = 1e-12;
const REFERENCE_EIGEN_TOL: f64 = 1e-10;

/// Uniform grid on `[-1,1]^d` with spacing `h = 1/m`; nodes `x = -1 + i/m`
/// for `i = 0..=2m`, boundary included.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefGrid {
    dim: usize,
    m: u32,
}

impl RefGrid {
    pub fn new(dim: usize, m: u32) -> Result<RefGrid> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::param(format!("dimension must be in 1..={MAX_DIM}, got {dim}")));
        }
        if m < 2 {
            return Err(Error::param(format!("reference grid needs m >= 2, got {m}")));
        }
        Ok(RefGrid { dim, m })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn refined(&self) -> RefGrid {
        RefGrid { dim: self.dim, m: 2 * self.m }
    }

    /// All nodes, boundary included.
    pub fn all_nodes(&self) -> NodeBox {
        NodeBox { dim: self.dim, radius: self.m as i64 }
    }

    pub fn interior(&self) -> NodeBox {
        NodeBox { dim: self.dim, radius: self.m as i64 - 1 }
    }

    pub fn position(&self, k: &Site) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.dim {
            x[i] = k.0[i] as f64 * self.h();
        }
        x
    }
}

/// Nodal values on a [`RefGrid`] (boundary nodes included).
#[derive(Clone, Debug, PartialEq)]
pub struct RefField {
    grid: RefGrid,
    values: Vec<f64>,
}

impl RefField {
    pub fn from_fn(grid: RefGrid, f: ContinuumFn<'_>) -> RefField {
        let values = grid.all_nodes().iter().map(|k| f(&grid.position(&k)[..grid.dim])).collect();
        RefField { grid, values }
    }

    pub fn from_values(grid: RefGrid, values: Vec<f64>) -> Result<RefField> {
        let expected = grid.all_nodes().len();
        if values.len() != expected {
            return Err(Error::Dimension { expected, found: values.len() });
        }
        Ok(RefField { grid, values })
    }

    fn from_interior(grid: RefGrid, interior: &[f64]) -> RefField {
        let inner = grid.interior();
        let values = grid.all_nodes().iter().map(|k| inner.index_of(&k).map_or(0.0, |i| interior[i])).collect();
        RefField { grid, values }
    }

    pub fn grid(&self) -> RefGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: &Site) -> f64 {
        self.grid.all_nodes().index_of(k).map_or(0.0, |i| self.values[i])
    }

    /// Multilinear interpolation; zero outside `[-1,1]^d`.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let d = self.grid.dim;
        let m = self.grid.m as f64;
        let mut base = [0i64; MAX_DIM];
        let mut frac = [0.0; MAX_DIM];
        for i in 0..d {
            let t = x[i] * m;
            if !(t >= -m && t <= m) {
                return 0.0;
            }
            let fl = libm::floor(t).min(m - 1.0);
            base[i] = fl as i64;
            frac[i] = t - fl;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut k = Site(base);
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    k.0[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w != 0.0 {
                acc += w * self.at(&k);
            }
        }
        acc
    }

    /// Trapezoid `L^2` norm; boundary nodes get the reduced weights.
    pub fn l2_norm(&self) -> f64 {
        let h = self.grid.h();
        let m = self.grid.m as i64;
        let s: f64 = self
            .grid
            .all_nodes()
            .iter()
            .zip(&self.values)
            .map(|(k, v)| {
                let w: f64 = k.coords(self.grid.dim).iter().map(|&c| if c.abs() == m { 0.5 } else { 1.0 }).product();
                w * v * v
            })
            .sum();
        libm::sqrt(s * libm::pow(h, self.grid.dim as f64))
    }

    pub fn scaled(mut self, factor: f64) -> RefField {
        self.values.iter_mut().for_each(|v| *v *= factor);
        self
    }

    /// `max |self - f|` over the nodes.
    pub fn max_error(&self, f: ContinuumFn<'_>) -> f64 {
        self.grid
            .all_nodes()
            .iter()
            .zip(&self.values)
            .map(|(k, v)| (v - f(&self.grid.position(&k)[..self.grid.dim])).abs())
            .fold(0.0, f64::max)
    }
}

/// The continuum problem `-(1/2) div(A grad u) + V u = f`.
pub struct HomogenizedProblem<'a> {
    pub a: DMatrix<f64>,
    pub potential: Option<ContinuumFn<'a>>,
    pub source: ContinuumFn<'a>,
    pub grid: RefGrid,
}

/// Extrapolated eigenvalues with the two raw grid sequences and the fine-grid
/// eigenfunctions (unit `L^2` norm, largest entry positive).
#[derive(Clone, Debug)]
pub struct HomogenizedEigen {
    pub values: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    pub vectors: Vec<RefField>,
}

/// Rejects non-square, non-symmetric or non-positive-definite `A`.
pub fn check_spd(a: &DMatrix<f64>, dim: usize) -> Result<()> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::Dimension { expected: dim, found: a.nrows() });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..dim {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale.max(1.0) {
                return Err(Error::param("coefficient matrix is not symmetric"));
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) || a.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(())
}

/// Second-order stencil for `-(1/2) div(A grad u) + V u` on the interior
/// nodes of `grid`, with the central cross-derivative stencil for the
/// off-diagonal entries of `A`.
pub fn homogenized_matrix(a: &DMatrix<f64>, potential: Option<ContinuumFn<'_>>, grid: RefGrid) -> Result<CsrMatrix> {
    let d = grid.dim;
    check_spd(a, d)?;
    let h2 = grid.h() * grid.h();
    let nodes = grid.interior();
    let mut b = CsrBuilder::new(nodes.len());
    for (i, x) in nodes.iter().enumerate() {
        let mut diag = potential.map_or(0.0, |v| v(&grid.position(&x)[..d]));
        for p in 0..d {
            let c = a[(p, p)] / (2.0 * h2);
            diag += 2.0 * c;
            for s in [1, -1] {
                if let Some(j) = nodes.index_of(&(x + Site::unit(p).scale(s))) {
                    b.push(j, -c);
                }
            }
            for q in (p + 1)..d {
                let c = a[(p, q)] / (4.0 * h2);
                if c == 0.0 {
                    continue;
                }
                for (sp, sq) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
                    let y = x + Site::unit(p).scale(sp) + Site::unit(q).scale(sq);
                    if let Some(j) = nodes.index_of(&y) {
                        b.push(j, -(sp * sq) as f64 * c);
                    }
                }
            }
        }
        b.push(i, diag);
        b.finish_row();
    }
    Ok(b.build())
}

pub fn homogenized_solve(prob: &HomogenizedProblem<'_>) -> Result<RefField> {
    let grid = prob.grid;
    let matrix = homogenized_matrix(&prob.a, prob.potential, grid)?;
    let rhs: Vec<f64> = grid.interior().iter().map(|k| (prob.source)(&grid.position(&k)[..grid.dim])).collect();
    let opts = CgOptions { stop: StopRule::RelativeL2(REFERENCE_TOL), max_iter: super::cg::default_max_iter(rhs.len()), project_every: None };
    let out = pcg(&matrix, &rhs, &opts)?;
    Ok(RefField::from_interior(grid, &out.x))
}

/// `k` smallest Dirichlet eigenvalues of `-(1/2) div(A grad) + V`, from the
/// stencil on `grid` and on its refinement, combined as `(4 fine - coarse) / 3`.
pub fn homogenized_eigs(a: &DMatrix<f64>, potential: Option<ContinuumFn<'_>>, k: usize, grid: RefGrid) -> Result<HomogenizedEigen> {
    let coarse = sym_eigs_smallest(&homogenized_matrix(a, potential, grid)?, k, REFERENCE_EIGEN_TOL, EigenMethod::Auto)?;
    let fine_grid = grid.refined();
    let fine = sym_eigs_smallest(&homogenized_matrix(a, potential, fine_grid)?, k, REFERENCE_EIGEN_TOL, EigenMethod::Auto)?;
    let values = coarse.values.iter().zip(&fine.values).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
    let vectors = fine
        .vectors
        .iter()
        .map(|v| {
            let field = RefField::from_interior(fine_grid, v);
            let norm = field.l2_norm();
            field.scaled(1.0 / norm)
        })
        .collect();
    Ok(HomogenizedEigen { values, coarse: coarse.values, fine: fine.values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn two_identity(d: usize) -> DMatrix<f64> {
        DMatrix::identity(d, d) * 2.0
    }

    #[test]
    fn one_dimensional_spectrum() {
        let grid = RefGrid::new(1, 32).unwrap();
        let e = homogenized_eigs(&DMatrix::identity(1, 1), None, 3, grid).unwrap();
        for (j, v) in e.values.iter().enumerate() {
            let k = (j + 1) as f64;
            let exact = k * k * PI * PI / 8.0;
            assert!((v - exact).abs() < 1e-5 * exact, "k = {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn constant_potential_shifts_everything() {
        let grid = RefGrid::new(1, 16).unwrap();
        let a = DMatrix::identity(1, 1);
        let base = homogenized_eigs(&a, None, 3, grid).unwrap();
        let c = |_: &[f64]| 0.7;
        let shifted = homogenized_eigs(&a, Some(&c), 3, grid).unwrap();
        for (x, y) in base.values.iter().zip(&shifted.values) {
            assert!((y - x - 0.7).abs() < 1e-9);
        }
    }

    #[test]
    fn manufactured_solution_with_cross_terms() {
        // u = cos(pi x/2) cos(pi y/2); -(1/2) div(A grad u) for A = [[2, a],[a, 2]]
        let a = 0.6;
        let grid = RefGrid::new(2, 32).unwrap();
        let u = |x: &[f64]| libm::cos(PI * x[0] / 2.0) * libm::cos(PI * x[1] / 2.0);
        let f = move |x: &[f64]| {
            let k = PI / 2.0;
            let uxx = -k * k * u(x);
            let uxy = k * k * libm::sin(k * x[0]) * libm::sin(k * x[1]);
            -(0.5) * (2.0 * uxx + 2.0 * a * uxy + 2.0 * uxx)
        };
        let prob = HomogenizedProblem { a: DMatrix::from_row_slice(2, 2, &[2.0, a, a, 2.0]), potential: None, source: &f, grid };
        let sol = homogenized_solve(&prob).unwrap();
        assert!(sol.max_error(&u) < 2e-3);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let grid = RefGrid::new(2, 4).unwrap();
        let zero = |_: &[f64]| 0.0;
        let prob = HomogenizedProblem { a: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), potential: None, source: &zero, grid };
        assert_eq!(homogenized_solve(&prob).unwrap_err(), Error::NotPositiveDefinite);
    }

    #[test]
    fn zero_source_gives_zero() {
        let grid = RefGrid::new(2, 8).unwrap();
        let zero = |_: &[f64]| 0.0;
        let prob = HomogenizedProblem { a: two_identity(2), potential: None, source: &zero, grid };
        assert!(homogenized_solve(&prob).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interpolation_is_exact_for_bilinear() {
        let grid = RefGrid::new(2, 4).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[0] * x[1];
        let field = RefField::from_fn(grid, &f);
        for p in [[0.13, -0.71], [0.99, 0.2], [-1.0, 1.0]] {
            assert!((field.interpolate(&p) - f(&p)).abs() < 1e-14);
        }
        assert_eq!(field.interpolate(&[1.5, 0.0]), 0.0);
    }
}
