//! Variable-speed random walk, local times, rescaled occupation profiles,
//! the spectral cumulant and the quadratic rate function.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::env::{Boundary, Environment};
use crate::hash::open_unit;
use crate::lattice::{assemble_generator, ContinuumFn, NodeBox};
use crate::site::{Site, MAX_DIM};
use crate::solve::{homogenized_eigs, sym_eigs_smallest, EigenMethod, RefField, RefGrid};
use crate::{Error, Result};

const CUMULANT_EIGEN_TOL: f64 = 1e-10;

/// Jump times and destinations of one walk up to `t_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub start: Site,
    /// `(jump time, destination)`, strictly increasing in time.
    pub events: Vec<(f64, Site)>,
    pub t_max: f64,
}

impl Trajectory {
    /// Position at time `t` (right-continuous).
    pub fn site_at(&self, t: f64) -> Site {
        let k = self.events.partition_point(|&(s, _)| s <= t);
        if k == 0 {
            self.start
        } else {
            self.events[k - 1].1
        }
    }

    pub fn jumps(&self) -> usize {
        self.events.len()
    }
}

/// Simulates the walk from `x0` on `[0, t_max]`: exponential holding times
/// with rate `sum_z w_{x,z}`, jump to `x + z` with probability `w_{x,z} / sum`.
/// A site with zero total rate is absorbing.
pub fn simulate_vsrw(env: &Environment, x0: Site, t_max: f64, seed: u64) -> Result<Trajectory> {
    if !(t_max.is_finite() && t_max >= 0.0) {
        return Err(Error::param(format!("time horizon must be finite and >= 0, got {t_max}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = env.support_steps();
    let mut rates = alloc::vec![0.0; steps.len()];
    let mut events = Vec::new();
    let (mut t, mut x) = (0.0, x0);
    loop {
        let mut total = 0.0;
        for (r, &z) in rates.iter_mut().zip(steps) {
            *r = env.weight(x, z);
            total += *r;
        }
        if !(total > 0.0) {
            break;
        }
        t += -libm::log(open_unit(rng.next_u64())) / total;
        if t > t_max {
            break;
        }
        let target = open_unit(rng.next_u64()) * total;
        let mut acc = 0.0;
        let mut pick = steps.len() - 1;
        for (i, r) in rates.iter().enumerate() {
            acc += r;
            if target < acc && *r > 0.0 {
                pick = i;
                break;
            }
        }
        while rates[pick] == 0.0 {
            pick -= 1;
        }
        x = x + steps[pick];
        events.push((t, x));
    }
    Ok(Trajectory { start: x0, events, t_max })
}

/// Occupation durations `l_t(z)` up to time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalTimes {
    pub t: f64,
    pub times: BTreeMap<Site, f64>,
}

impl LocalTimes {
    pub fn get(&self, z: &Site) -> f64 {
        self.times.get(z).copied().unwrap_or(0.0)
    }

    /// Compensated sum of all occupation durations.
    pub fn total(&self) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for &v in self.times.values() {
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
        }
        s + c
    }
}

pub fn local_times(traj: &Trajectory, t: f64) -> Result<LocalTimes> {
    if !(t >= 0.0) {
        return Err(Error::param(format!("time must be >= 0, got {t}")));
    }
    if t > traj.t_max {
        return Err(Error::domain(format!("time {t} exceeds the simulated horizon {}", traj.t_max)));
    }
    let mut times = BTreeMap::new();
    let (mut prev, mut site) = (0.0, traj.start);
    for &(s, dest) in &traj.events {
        if s >= t {
            break;
        }
        *times.entry(site).or_insert(0.0) += s - prev;
        prev = s;
        site = dest;
    }
    *times.entry(site).or_insert(0.0) += t - prev;
    Ok(LocalTimes { t, times })
}

/// `L_t(y) = (alpha^d / t) l_t(floor(alpha y))` as a step function.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledProfile {
    pub alpha: f64,
    pub dim: usize,
    /// Density on the cell `[z/alpha, (z+1)/alpha)` per occupied site `z`.
    pub density: BTreeMap<Site, f64>,
    /// Some occupied site lies outside `alpha Q`.
    pub support_violation: bool,
}

impl RescaledProfile {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut z = Site::ORIGIN;
        for (i, &v) in y.iter().enumerate().take(self.dim) {
            z.0[i] = libm::floor(self.alpha * v) as i64;
        }
        self.density.get(&z).copied().unwrap_or(0.0)
    }

    /// `int L_t`; equals 1 by construction.
    pub fn integral(&self) -> f64 {
        let cell = libm::pow(self.alpha, -(self.dim as f64));
        self.density.values().map(|v| v * cell).sum()
    }
}

pub fn rescaled_profile(lt: &LocalTimes, alpha: f64, dim: usize) -> Result<RescaledProfile> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }
    if !(lt.t > 0.0) {
        return Err(Error::param("profile needs t > 0"));
    }
    let scale = libm::pow(alpha, dim as f64) / lt.t;
    let mut violation = false;
    let mut density = BTreeMap::new();
    for (z, &v) in &lt.times {
        if v > 0.0 && z.coords(dim).iter().any(|&c| (c as f64).abs() >= alpha) {
            violation = true;
        }
        density.insert(*z, v * scale);
    }
    Ok(RescaledProfile { alpha, dim, density, support_violation: violation })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CumulantWarning {
    /// `t / alpha^2 < 4`: the box is not small against the diffusive scale.
    AlphaNotSmall,
}

/// `-lambda_1(V) + lambda_1(0)` of the continuum operator `-(1/2) div(A grad) + V`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CumulantTarget {
    pub value: f64,
    pub lambda_v: f64,
    pub lambda_0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CumulantEstimate {
    pub t: f64,
    pub alpha: f64,
    /// `Lambda_t = -lambda_1^(t)(V) + lambda_1^(t)(0)`.
    pub value: f64,
    pub lambda_v: f64,
    pub lambda_0: f64,
    pub target: Option<CumulantTarget>,
    pub warnings: Vec<CumulantWarning>,
}

impl CumulantEstimate {
    /// `|Lambda_t - target| / |target|`.
    pub fn relative_gap(&self) -> Option<f64> {
        self.target.map(|t| (self.value - t.value).abs() / t.value.abs())
    }
}

/// Sites `{z : |z_i| < alpha}`.
pub fn cumulant_box(dim: usize, alpha: f64) -> NodeBox {
    NodeBox { dim, radius: libm::ceil(alpha) as i64 - 1 }
}

/// The matrix `alpha^2 (-L_w) + diag(V(z / alpha))` on `{|z_i| < alpha}` with
/// zero Dirichlet data.
pub fn cumulant_operator(env: &Environment, potential: Option<ContinuumFn<'_>>, alpha: f64) -> Result<crate::sparse::CsrMatrix> {
    let g = env.geometry();
    if g.boundary != Boundary::Box {
        return Err(Error::param("the cumulant is evaluated on a box geometry"));
    }
    if !(alpha >= 2.0 && alpha.is_finite()) {
        return Err(Error::param(format!("alpha must be >= 2, got {alpha}")));
    }
    let nodes = cumulant_box(env.dim(), alpha);
    if nodes.radius >= g.n {
        return Err(Error::param(format!("box of radius {} exceeds the environment half-width {}", nodes.radius, g.n)));
    }
    let mut m = assemble_generator(env, nodes, alpha * alpha);
    if let Some(v) = potential {
        let d = env.dim();
        let shift: Vec<f64> = nodes
            .iter()
            .map(|z| {
                let mut y = [0.0; MAX_DIM];
                for i in 0..d {
                    y[i] = z.0[i] as f64 / alpha;
                }
                v(&y[..d])
            })
            .collect();
        m.add_diagonal(&shift);
    }
    Ok(m)
}

/// Lattice side of the cumulant at time `t` with box scale `alpha`.
pub fn lattice_cumulant(env: &Environment, potential: Option<ContinuumFn<'_>>, t: f64, alpha: f64) -> Result<CumulantEstimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param(format!("t must be > 0, got {t}")));
    }
    let base = cumulant_operator(env, None, alpha)?;
    let lambda_0 = sym_eigs_smallest(&base, 1, CUMULANT_EIGEN_TOL, EigenMethod::Auto)?.values[0];
    let lambda_v = match potential {
        None => lambda_0,
        Some(v) => sym_eigs_smallest(&cumulant_operator(env, Some(v), alpha)?, 1, CUMULANT_EIGEN_TOL, EigenMethod::Auto)?.values[0],
    };
    let mut warnings = Vec::new();
    if t / (alpha * alpha) < 4.0 {
        warnings.push(CumulantWarning::AlphaNotSmall);
    }
    Ok(CumulantEstimate { t, alpha, value: -lambda_v + lambda_0, lambda_v, lambda_0, target: None, warnings })
}

/// Continuum target from the extrapolated reference eigenvalues on `grid`.
pub fn cumulant_target(a: &DMatrix<f64>, potential: ContinuumFn<'_>, grid: RefGrid) -> Result<CumulantTarget> {
    let lambda_0 = homogenized_eigs(a, None, 1, grid)?.values[0];
    let lambda_v = homogenized_eigs(a, Some(potential), 1, grid)?.values[0];
    Ok(CumulantTarget { value: -lambda_v + lambda_0, lambda_v, lambda_0 })
}

/// Lattice cumulant together with its homogenized target for `A = a`.
pub fn cumulant_spectral(env: &Environment, a: &DMatrix<f64>, potential: ContinuumFn<'_>, t: f64, alpha: f64, grid: RefGrid) -> Result<CumulantEstimate> {
    let mut est = lattice_cumulant(env, Some(potential), t, alpha)?;
    est.target = Some(cumulant_target(a, potential, grid)?);
    Ok(est)
}

/// `int grad g · D grad g` with gradients taken at cell centres of the
/// reference grid (no normalization or boundary checks).
pub fn quadratic_form(d: &DMatrix<f64>, g: &RefField) -> Result<f64> {
    let grid = g.grid();
    let dim = grid.dim();
    if d.nrows() != dim || d.ncols() != dim {
        return Err(Error::Dimension { expected: dim, found: d.nrows() });
    }
    let h = grid.h();
    let m = grid.m() as i64;
    let corners = 1usize << dim;
    let mut total = 0.0;
    // cells are indexed by their lower corner in [-m, m-1]^d
    let cells = NodeBox { dim, radius: m };
    for lower in cells.iter().filter(|k| k.coords(dim).iter().all(|&c| c < m)) {
        let mut grad = [0.0; MAX_DIM];
        for c in 0..corners {
            let mut k = lower;
            for i in 0..dim {
                k.0[i] += (c >> i & 1) as i64;
            }
            let v = g.at(&k);
            for (i, gi) in grad.iter_mut().enumerate().take(dim) {
                let sign = if c >> i & 1 == 1 { 1.0 } else { -1.0 };
                *gi += sign * v;
            }
        }
        let norm = (corners / 2) as f64 * h;
        let mut q = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                q += grad[i] / norm * d[(i, j)] * grad[j] / norm;
            }
        }
        total += q;
    }
    Ok(total * libm::pow(h, dim as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateValue {
    /// `I(g)`, or `+inf` when `g` does not vanish on the boundary.
    pub value: f64,
    /// The value is comparable to the largest the grid can represent, so it
    /// is dominated by grid-scale oscillation.
    pub energy_dominated: bool,
}

/// Tolerance on `| ||g||_2 - 1 |`.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// `I(g) = int grad g · D_eff grad g` with `D_eff = A / 2`, for `g` of unit
/// `L^2` norm on the reference grid.
pub fn rate_function(a: &DMatrix<f64>, g: &RefField) -> Result<RateValue> {
    let norm = g.l2_norm();
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::param(format!("rate function needs ||g||_2 = 1, got {norm}")));
    }
    let grid = g.grid();
    let dim = grid.dim();
    let m = grid.m() as i64;
    let scale = g.values().iter().fold(0.0f64, |s, v| s.max(v.abs()));
    let boundary_max = grid
        .all_nodes()
        .iter()
        .filter(|k| k.coords(dim).iter().any(|c| c.abs() == m))
        .map(|k| g.at(&k).abs())
        .fold(0.0, f64::max);
    if boundary_max > 1e-8 * scale {
        return Ok(RateValue { value: f64::INFINITY, energy_dominated: false });
    }
    let d_eff = a * 0.5;
    let value = quadratic_form(&d_eff, g)?;
    let lambda_max = d_eff.clone().symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
    let h = grid.h();
    let ceiling = 4.0 * dim as f64 * lambda_max / (h * h);
    Ok(RateValue { value, energy_dominated: value >= 0.25 * ceiling })
}
