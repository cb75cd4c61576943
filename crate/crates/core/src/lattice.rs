//! The rescaled box `Q_eps = (-1,1)^d ∩ eps Z^d`, grid functions with zero
//! Dirichlet extension, and the accelerated operator
//!
//! ```text
//! (L^eps u)(x) = eps^-2 sum_z w_{x/eps, z} [u(x + eps z) - u(x)]
//! ```
//!
//! Interior nodes are indexed row-major over the integer coordinates
//! `k ∈ (-n, n)^d` (last coordinate fastest), `x = k / n`.

use alloc::format;
use alloc::vec::Vec;

use crate::env::{Boundary, Environment};
use crate::site::{cube_sites, Site, MAX_DIM};
use crate::sparse::{CsrBuilder, CsrMatrix};
use crate::{Error, Result};

/// Continuum function on `R^d`, evaluated at a point given by `d` coordinates.
pub type ContinuumFn<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Lattice spacing `eps = 1/n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon(u32);

impl Epsilon {
    pub fn inverse_of(n: u32) -> Result<Epsilon> {
        if n < 2 {
            return Err(Error::param(format!("eps = 1/n needs n >= 2, got n = {n}")));
        }
        Ok(Epsilon(n))
    }

    /// Accepts `eps` only when `1/eps` is an integer (to 1e-9 relative).
    pub fn from_value(eps: f64) -> Result<Epsilon> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::param(format!("eps must be positive, got {eps}")));
        }
        let inv = 1.0 / eps;
        let n = libm::round(inv);
        if (inv - n).abs() > 1e-9 * inv || n > u32::MAX as f64 {
            return Err(Error::param(format!("eps = {eps} is not of the form 1/n")));
        }
        Epsilon::inverse_of(n as u32)
    }

    pub fn n(&self) -> u32 {
        self.0
    }

    pub fn value(&self) -> f64 {
        1.0 / self.0 as f64
    }
}

/// Integer nodes `{k : |k_i| <= radius}` in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeBox {
    pub dim: usize,
    pub radius: i64,
}

impl NodeBox {
    pub fn side(&self) -> usize {
        (2 * self.radius + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.radius < 0
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.coords(self.dim).iter().all(|c| c.abs() <= self.radius)
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let side = self.side();
        Some(s.coords(self.dim).iter().fold(0usize, |acc, &c| acc * side + (c + self.radius) as usize))
    }

    pub fn site(&self, mut idx: usize) -> Site {
        let side = self.side();
        let mut c = [0i64; MAX_DIM];
        for k in (0..self.dim).rev() {
            c[k] = (idx % side) as i64 - self.radius;
            idx /= side;
        }
        Site(c)
    }

    pub fn iter(&self) -> impl Iterator<Item = Site> {
        cube_sites(self.dim, self.radius)
    }
}

/// A real function on the interior nodes of `Q_eps`, extended by zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    eps: Epsilon,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(eps: Epsilon, dim: usize) -> GridFunction {
        let len = interior(eps, dim).len();
        GridFunction { eps, dim, values: alloc::vec![0.0; len] }
    }

    pub fn from_values(eps: Epsilon, dim: usize, values: Vec<f64>) -> Result<GridFunction> {
        let expected = interior(eps, dim).len();
        if values.len() != expected {
            return Err(Error::Dimension { expected, found: values.len() });
        }
        Ok(GridFunction { eps, dim, values })
    }

    /// Point values `f(x)` at the interior nodes.
    pub fn sample(eps: Epsilon, dim: usize, f: ContinuumFn<'_>) -> GridFunction {
        let nodes = interior(eps, dim);
        let h = eps.value();
        let values = nodes
            .iter()
            .map(|k| {
                let x = position(&k, dim, h);
                f(&x[..dim])
            })
            .collect();
        GridFunction { eps, dim, values }
    }

    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> NodeBox {
        interior(self.eps, self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at integer node `k`; zero outside the interior.
    pub fn at(&self, k: &Site) -> f64 {
        self.nodes().index_of(k).map_or(0.0, |i| self.values[i])
    }

    /// `<u, v>_{H_eps} = eps^d sum u v`.
    pub fn inner(&self, other: &GridFunction) -> Result<f64> {
        self.check_same(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(s * self.cell_volume())
    }

    pub fn cell_volume(&self) -> f64 {
        libm::pow(self.eps.value(), self.dim as f64)
    }

    fn check_same(&self, other: &GridFunction) -> Result<()> {
        if self.eps != other.eps || self.dim != other.dim {
            return Err(Error::Dimension { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }
}

pub(crate) fn interior(eps: Epsilon, dim: usize) -> NodeBox {
    NodeBox { dim, radius: eps.n() as i64 - 1 }
}

pub(crate) fn position(k: &Site, dim: usize, h: f64) -> [f64; MAX_DIM] {
    let mut x = [0.0; MAX_DIM];
    for i in 0..dim {
        x[i] = k.0[i] as f64 * h;
    }
    x
}

/// Assembled `-L^eps + diag(R_eps V)` on the interior nodes.
#[derive(Clone, Debug)]
pub struct GridOperator {
    eps: Epsilon,
    dim: usize,
    matrix: CsrMatrix,
    seed: u64,
    truncation: Option<u32>,
    has_potential: bool,
}

impl GridOperator {
    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn truncation(&self) -> Option<u32> {
        self.truncation
    }

    pub fn has_potential(&self) -> bool {
        self.has_potential
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `scale * (-L_w)` restricted to `nodes` with zero Dirichlet data: edges
/// leaving the node set contribute only to the diagonal. Every row carries
/// an explicit diagonal entry.
pub fn assemble_generator(env: &Environment, nodes: NodeBox, scale: f64) -> CsrMatrix {
    let mut b = CsrBuilder::new(nodes.len());
    for (i, x) in nodes.iter().enumerate() {
        let mut diag = 0.0;
        for &z in env.support_steps() {
            let w = env.weight(x, z);
            if w == 0.0 {
                continue;
            }
            diag += scale * w;
            if let Some(j) = nodes.index_of(&(x + z)) {
                b.push(j, -scale * w);
            }
        }
        b.push(i, diag);
        b.finish_row();
    }
    b.build()
}

/// Assembles `-L^eps + diag(R_eps V)` on `Q_eps`.
///
/// The environment must be a box geometry of half-width at least `1/eps`;
/// the potential is averaged by midpoint quadrature.
pub fn assemble_operator(env: &Environment, eps: Epsilon, potential: Option<ContinuumFn<'_>>) -> Result<GridOperator> {
    let g = env.geometry();
    if g.boundary != Boundary::Box {
        return Err(Error::param("operator assembly needs a box geometry"));
    }
    if (eps.n() as i64) > g.n {
        return Err(Error::param(format!("eps = 1/{} needs a box of half-width >= {}, environment has {}", eps.n(), eps.n(), g.n)));
    }
    let dim = env.dim();
    let n = eps.n() as f64;
    let mut matrix = assemble_generator(env, interior(eps, dim), n * n);
    if let Some(v) = potential {
        let shift = GridFunction::sample(eps, dim, v);
        matrix.add_diagonal(shift.values());
    }
    Ok(GridOperator {
        eps,
        dim,
        matrix,
        seed: env.seed(),
        truncation: if env.law().is_nearest_neighbor() { None } else { g.r_max },
        has_potential: potential.is_some(),
    })
}

/// Matrix-vector product `op u`.
pub fn apply(op: &GridOperator, u: &GridFunction) -> Result<GridFunction> {
    if u.eps != op.eps || u.dim != op.dim {
        return Err(Error::Dimension { expected: op.len(), found: u.values.len() });
    }
    Ok(GridFunction { eps: op.eps, dim: op.dim, values: op.matrix.mul_vec(&u.values) })
}

/// `E^eps(u) = (eps^d / 2) sum_{x ∈ eps Z^d} sum_z w_{x/eps,z} (d^eps_z u(x))^2`,
/// evaluated edge by edge from the environment (not from the assembled matrix).
pub fn dirichlet_energy(env: &Environment, eps: Epsilon, u: &GridFunction) -> Result<f64> {
    if u.eps != eps || u.dim != env.dim() {
        return Err(Error::Dimension { expected: interior(eps, env.dim()).len(), found: u.values.len() });
    }
    let nodes = u.nodes();
    let mut directed_sum = 0.0;
    for (i, x) in nodes.iter().enumerate() {
        let ux = u.values[i];
        for &z in env.support_steps() {
            let w = env.weight(x, z);
            if w == 0.0 {
                continue;
            }
            match nodes.index_of(&(x + z)) {
                // both orientations of an interior edge are visited from the two ends
                Some(j) => {
                    let d = u.values[j] - ux;
                    directed_sum += w * d * d;
                }
                // (x, z) and (x + z, -z) both appear in the full sum
                None => directed_sum += 2.0 * w * ux * ux,
            }
        }
    }
    let n = eps.n() as f64;
    Ok(0.5 * u.cell_volume() * n * n * directed_sum)
}

/// Local averages `R_eps f` by midpoint quadrature over `b(z, eps/2)`.
pub fn restrict(f: ContinuumFn<'_>, eps: Epsilon, dim: usize) -> GridFunction {
    GridFunction::sample(eps, dim, f)
}

/// Step function `R_eps^* u = sum_z u(z) 1_{b(z, eps/2)}`, with
/// `b(z, eps/2) = z + (-eps/2, eps/2]^d`.
#[derive(Clone, Debug)]
pub struct StepFunction {
    grid: GridFunction,
}

pub fn embed(u: &GridFunction) -> StepFunction {
    StepFunction { grid: u.clone() }
}

impl StepFunction {
    /// Integer node whose cell contains `x`.
    pub fn cell_of(&self, x: &[f64]) -> Site {
        let n = self.grid.eps.n() as f64;
        let mut c = [0i64; MAX_DIM];
        for (i, xi) in x.iter().enumerate().take(self.grid.dim) {
            c[i] = libm::ceil(xi * n - 0.5) as i64;
        }
        Site(c)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.grid.at(&self.cell_of(x))
    }

    /// Exact `L^2(R^d)` norm: each cell has volume `eps^d`.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.grid.values.iter().map(|v| v * v).sum();
        libm::sqrt(s * self.grid.cell_volume())
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    /// `||self - f||_{L^2(Q)}`. `Q` is cut into sub-cells of side `eps/2`
    /// (each inside a single step cell) and each sub-cell is integrated with
    /// the 3-point Gauss–Legendre rule per axis.
    pub fn l2_distance(&self, f: ContinuumFn<'_>) -> f64 {
        const NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let dim = self.grid.dim;
        let n = self.grid.eps.n() as usize;
        let half = 0.5 / n as f64;
        let per_axis = 4 * n;
        let total = per_axis.pow(dim as u32);
        let quad_points = 3usize.pow(dim as u32);
        let mut acc = 0.0;
        let mut x = [0.0; MAX_DIM];
        let mut center = [0.0; MAX_DIM];
        for cell in 0..total {
            let mut rest = cell;
            for i in (0..dim).rev() {
                center[i] = -1.0 + ((rest % per_axis) as f64 + 0.5) * half;
                rest /= per_axis;
            }
            let u = self.eval(&center[..dim]);
            for q in 0..quad_points {
                let mut w = 1.0;
                let mut r = q;
                for i in 0..dim {
                    x[i] = center[i] + 0.5 * half * NODES[r % 3];
                    w *= WEIGHTS[r % 3];
                    r /= 3;
                }
                let d = u - f(&x[..dim]);
                acc += w * d * d;
            }
        }
        // Jacobian of the map from [-1,1]^d onto a sub-cell
        libm::sqrt(acc * libm::pow(0.5 * half, dim as f64))
    }
}

/// `(eps^d sum |u|^p)^(1/p)`, or `max |u|` for `p = inf`.
pub fn grid_norm(u: &GridFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param(format!("norm exponent must be >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(u.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let s: f64 = u.values.iter().map(|v| libm::pow(v.abs(), p)).sum();
    Ok(libm::pow(s * u.cell_volume(), 1.0 / p))
}
