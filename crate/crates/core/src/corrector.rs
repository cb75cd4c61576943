//! Periodic cell problems on the torus `Z^d / (L Z)^d` and the homogenized
//! matrix
//!
//! ```text
//! A_ij = avg_x sum_z w_{x,z} (z_i + grad chi_i(x,z)) (z_j + grad chi_j(x,z)),
//! grad chi(x,z) = chi(x+z) - chi(x).
//! ```
//!
//! The corrector `chi_j` solves `sum_z w_{x,z} (chi_j(x+z) - chi_j(x) + z_j) = 0`
//! at every torus vertex, with zero mean.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::env::{sample_environment, Boundary, Environment, Geometry, LawSpec};
use crate::paths::{nu_l, path_family};
use crate::site::{Site, MAX_DIM};
use crate::solve::{check_spd, pcg, CgOptions, StopRule};
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::{EdgeId, Error, Result};

/// Residual re-projection period for the singular periodic system.
const PROJECT_EVERY: usize = 50;

/// Row-major indexing of torus vertices with coordinates in `[0, L)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct TorusIndex {
    dim: usize,
    side: i64,
}

impl TorusIndex {
    fn len(&self) -> usize {
        (self.side as usize).pow(self.dim as u32)
    }

    fn index_of(&self, x: &Site) -> usize {
        x.coords(self.dim).iter().fold(0usize, |acc, &c| acc * self.side as usize + c.rem_euclid(self.side) as usize)
    }

    fn site(&self, mut idx: usize) -> Site {
        let mut c = [0i64; MAX_DIM];
        for k in (0..self.dim).rev() {
            c[k] = (idx % self.side as usize) as i64;
            idx /= self.side as usize;
        }
        Site(c)
    }

    fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(|i| self.site(i))
    }
}

fn torus_index(env: &Environment) -> Result<TorusIndex> {
    let g = env.geometry();
    if g.boundary != Boundary::Torus {
        return Err(Error::param("cell problems need a torus geometry"));
    }
    Ok(TorusIndex { dim: g.dim, side: g.side() })
}

/// `K = D - W` on the torus: `(K chi)(x) = sum_z w_{x,z} (chi(x) - chi(x+z))`.
fn torus_laplacian(env: &Environment, idx: TorusIndex) -> CsrMatrix {
    let mut b = CsrBuilder::new(idx.len());
    for (i, x) in idx.sites().enumerate() {
        let mut diag = 0.0;
        for &z in env.support_steps() {
            let w = env.weight(x, z);
            if w == 0.0 {
                continue;
            }
            diag += w;
            b.push(idx.index_of(&(x + z)), -w);
        }
        b.push(i, diag);
        b.finish_row();
    }
    b.build()
}

fn drift(env: &Environment, idx: TorusIndex, j: usize) -> Vec<f64> {
    idx.sites()
        .map(|x| env.support_steps().iter().map(|&z| env.weight(x, z) * z.0[j] as f64).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorField {
    direction: usize,
    dim: usize,
    side: i64,
    values: Vec<f64>,
    residual: f64,
}

impl CorrectorField {
    /// Coordinate direction `j` (0-based).
    pub fn direction(&self) -> usize {
        self.direction
    }

    pub fn side(&self) -> i64 {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `chi(x)` with periodic wrapping.
    pub fn value(&self, x: Site) -> f64 {
        self.values[TorusIndex { dim: self.dim, side: self.side }.index_of(&x)]
    }

    /// `chi(x + z) - chi(x)`.
    pub fn gradient(&self, x: Site, z: Site) -> f64 {
        self.value(x + z) - self.value(x)
    }

    /// `max_x |sum_z w_{x,z} (chi(x+z) - chi(x) + z_j)|` at solve time.
    pub fn flux_residual(&self) -> f64 {
        self.residual
    }
}

/// Pointwise flux-stationarity residual of `chi` in `env`, recomputed edge by edge.
pub fn flux_residual(env: &Environment, chi: &CorrectorField) -> Result<f64> {
    let idx = torus_index(env)?;
    if idx.side != chi.side || idx.dim != chi.dim {
        return Err(Error::param("corrector was solved on a different torus"));
    }
    let j = chi.direction;
    Ok(idx
        .sites()
        .map(|x| {
            env.support_steps()
                .iter()
                .map(|&z| env.weight(x, z) * (chi.gradient(x, z) + z.0[j] as f64))
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max))
}

/// Solves the cell problem in direction `j` (0-based) to flux residual `tol`.
pub fn solve_cell_problem(env: &Environment, j: usize, tol: f64) -> Result<CorrectorField> {
    let idx = torus_index(env)?;
    if j >= idx.dim {
        return Err(Error::param(format!("direction {j} out of range for d = {}", idx.dim)));
    }
    let k = torus_laplacian(env, idx);
    let b = drift(env, idx, j);
    let opts = CgOptions { stop: StopRule::AbsoluteMax(tol), max_iter: crate::solve::cg::default_max_iter(idx.len()), project_every: Some(PROJECT_EVERY) };
    let out = pcg(&k, &b, &opts)?;
    let kx = k.mul_vec(&out.x);
    let residual = b.iter().zip(&kx).map(|(b, k)| (b - k).abs()).fold(0.0, f64::max);
    Ok(CorrectorField { direction: j, dim: idx.dim, side: idx.side, values: out.x, residual })
}

/// Where an estimate came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub law: LawSpec,
    pub seeds: Vec<u64>,
    pub side: i64,
    pub truncation: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedMatrix {
    matrix: DMatrix<f64>,
    provenance: Provenance,
}

impl HomogenizedMatrix {
    /// Wraps a symmetric positive definite matrix.
    pub fn new(matrix: DMatrix<f64>, provenance: Provenance) -> Result<HomogenizedMatrix> {
        check_spd(&matrix, matrix.nrows())?;
        Ok(HomogenizedMatrix { matrix, provenance })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Effective diffusion matrix `A / 2`.
    pub fn d_eff(&self) -> DMatrix<f64> {
        &self.matrix * 0.5
    }

    pub fn lambda_min(&self) -> f64 {
        self.matrix.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).abs().max()
    }
}

/// Raw `A` from the correctors of every direction (upper triangle computed,
/// then mirrored).
pub fn a_hom_matrix(env: &Environment, correctors: &[CorrectorField]) -> Result<DMatrix<f64>> {
    let idx = torus_index(env)?;
    let d = idx.dim;
    if correctors.len() != d {
        return Err(Error::Dimension { expected: d, found: correctors.len() });
    }
    for (i, c) in correctors.iter().enumerate() {
        if c.direction != i || c.side != idx.side || c.dim != d {
            return Err(Error::param("correctors must be solved on this torus, one per direction in order"));
        }
    }
    let mut a = DMatrix::zeros(d, d);
    let mut flux = [0.0; MAX_DIM];
    for x in idx.sites() {
        for &z in env.support_steps() {
            let w = env.weight(x, z);
            if w == 0.0 {
                continue;
            }
            for (i, c) in correctors.iter().enumerate() {
                flux[i] = z.0[i] as f64 + c.gradient(x, z);
            }
            for i in 0..d {
                for j in i..d {
                    a[(i, j)] += w * flux[i] * flux[j];
                }
            }
        }
    }
    let volume = idx.len() as f64;
    for i in 0..d {
        for j in i..d {
            a[(i, j)] /= volume;
            a[(j, i)] = a[(i, j)];
        }
    }
    Ok(a)
}

pub fn assemble_a_hom(env: &Environment, correctors: &[CorrectorField]) -> Result<HomogenizedMatrix> {
    let a = a_hom_matrix(env, correctors)?;
    let provenance = Provenance {
        law: env.law().clone(),
        seeds: alloc::vec![env.seed()],
        side: env.geometry().side(),
        truncation: if env.law().is_nearest_neighbor() { None } else { env.geometry().r_max },
    };
    HomogenizedMatrix::new(a, provenance)
}

/// Solves all `d` cell problems and assembles `A` on one torus.
pub fn cell_a_hom(env: &Environment, tol: f64) -> Result<HomogenizedMatrix> {
    let correctors = (0..env.dim()).map(|j| solve_cell_problem(env, j, tol)).collect::<Result<Vec<_>>>()?;
    assemble_a_hom(env, &correctors)
}

/// Empirical lower bound `1 / (l |Γ_l| avg_x nu_l(x))` for the smallest
/// eigenvalue of `A`, with the average over the torus.
pub fn nondegeneracy_bound(env: &Environment, l: u32) -> Result<f64> {
    let idx = torus_index(env)?;
    let d = idx.dim;
    let paths = path_family(d, EdgeId::new(Site::ORIGIN, Site::unit(0)).expect("unit step"), l)?.len();
    let mut sum = 0.0;
    for x in idx.sites() {
        sum += nu_l(env, x, l)?;
    }
    let mean = sum / idx.len() as f64;
    Ok(1.0 / (l as f64 * paths as f64 * mean))
}

/// One `(L, seed)` cell of an estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct CellEstimate {
    pub side: i64,
    pub seed: u64,
    pub matrix: DMatrix<f64>,
    pub lambda_min: f64,
}

/// Solves the cell problems for one torus side and seed.
pub fn estimate_cell(law: &LawSpec, d: usize, side: i64, seed: u64, tol: f64) -> Result<CellEstimate> {
    if side < 4 || side % 2 != 0 {
        return Err(Error::param(format!("torus side must be even and >= 4, got {side}")));
    }
    let env = sample_environment(law.clone(), Geometry::torus(d, side / 2)?, seed)?;
    let a = cell_a_hom(&env, tol)?;
    Ok(CellEstimate { side, seed, lambda_min: a.lambda_min(), matrix: a.matrix })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AHomEstimate {
    pub cells: Vec<CellEstimate>,
    /// Seed-averaged matrix per side, in increasing side order.
    pub side_means: Vec<(i64, DMatrix<f64>)>,
    /// `||mean(L_{i+1}) - mean(L_i)||_F`.
    pub deviations: Vec<f64>,
    /// Seed average at the largest side.
    pub estimate: HomogenizedMatrix,
}

/// Completed cells and the error that stopped an estimate.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("estimate stopped after {} completed cells: {error}", completed.len())]
pub struct PartialEstimate {
    pub completed: Vec<CellEstimate>,
    pub error: Error,
}

impl From<PartialEstimate> for Error {
    fn from(p: PartialEstimate) -> Error {
        p.error
    }
}

fn validate_plan(sides: &[i64], seeds: &[u64]) -> Result<()> {
    if sides.is_empty() || seeds.is_empty() {
        return Err(Error::param("need at least one torus side and one seed"));
    }
    if sides.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("torus sides must be strictly increasing"));
    }
    Ok(())
}

/// Combines completed cells (any order) into per-side means, deviations and
/// the final estimate.
pub fn summarize_cells(law: &LawSpec, d: usize, sides: &[i64], seeds: &[u64], cells: Vec<CellEstimate>) -> Result<AHomEstimate> {
    validate_plan(sides, seeds)?;
    let mut side_means = Vec::with_capacity(sides.len());
    for &side in sides {
        let mut sum = DMatrix::zeros(d, d);
        let mut count = 0usize;
        for c in cells.iter().filter(|c| c.side == side) {
            sum += &c.matrix;
            count += 1;
        }
        if count == 0 {
            return Err(Error::param(format!("no completed cells for side {side}")));
        }
        side_means.push((side, sum / count as f64));
    }
    let deviations = side_means.windows(2).map(|w| (&w[1].1 - &w[0].1).norm()).collect();
    let (side, last) = side_means.last().cloned().expect("nonempty");
    let env_trunc = if law.is_nearest_neighbor() { None } else { Some(crate::env::DEFAULT_R_MAX) };
    let estimate = HomogenizedMatrix::new(last, Provenance { law: law.clone(), seeds: seeds.to_vec(), side, truncation: env_trunc })?;
    Ok(AHomEstimate { cells, side_means, deviations, estimate })
}

/// Sequential RVE study over torus sides `sides` (each `L = 2n`) and `seeds`.
pub fn estimate_a_hom(law: &LawSpec, d: usize, sides: &[i64], seeds: &[u64], tol: f64) -> core::result::Result<AHomEstimate, PartialEstimate> {
    let fail = |completed: &Vec<CellEstimate>, error| PartialEstimate { completed: completed.clone(), error };
    validate_plan(sides, seeds).map_err(|e| fail(&Vec::new(), e))?;
    let mut cells = Vec::with_capacity(sides.len() * seeds.len());
    for &side in sides {
        for &seed in seeds {
            match estimate_cell(law, d, side, seed, tol) {
                Ok(c) => cells.push(c),
                Err(e) => return Err(fail(&cells, e)),
            }
        }
    }
    summarize_cells(law, d, sides, seeds, cells.clone()).map_err(|e| fail(&cells, e))
}

/// Torus vertices `[0, L)^d` in row-major order (the corrector value order).
pub fn torus_sites(env: &Environment) -> Result<Vec<Site>> {
    Ok(torus_index(env)?.sites().collect())
}
