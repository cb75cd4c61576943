//! Edge-disjoint path families, path-optimized resistances and the vertex
//! measures
//!
//! ```text
//! nu(x)   = sum_{e ∋ x} 1 / w(e)
//! nu_l(x) = sum_{e ∋ x} min_{γ ∈ Γ_l(e)} sum_{e' ∈ γ} 1 / w(e')
//! ```
//!
//! over the nearest-neighbour edges incident to `x`.
//!
//! The template family for the edge `{0, e_a}` is
//! * the direct edge,
//! * for every axis `b != a` and sign `s`, the detour `0, s e_b, s e_b + e_a, e_a`,
//! * one detour of length 9 two rows out in the plane of `a` and
//!   `b = (a + 1) mod d`:
//!   `0, -e_a, -e_a+e_b, -e_a+2e_b, 2e_b, e_a+2e_b, 2e_a+2e_b, 2e_a+e_b, 2e_a, e_a`.
//!
//! That is `2d` pairwise edge-disjoint paths for `d >= 2`. `Γ_l` keeps the
//! paths of length at most `l`.

use alloc::format;
use alloc::vec::Vec;

use crate::env::Environment;
use crate::lattice::NodeBox;
use crate::site::{EdgeId, Site, MAX_DIM};
use crate::{Error, Result};

/// Length of the longest template path.
pub const DEFAULT_PATH_LENGTH: u32 = 9;

#[derive(Clone, Debug, PartialEq)]
pub struct PathFamily {
    edge: EdgeId,
    paths: Vec<Vec<Site>>,
    l: u32,
}

impl PathFamily {
    pub fn edge(&self) -> EdgeId {
        self.edge
    }

    /// Vertex sequences from `edge.base()` to `edge.tip()`.
    pub fn paths(&self) -> &[Vec<Site>] {
        &self.paths
    }

    pub fn max_length(&self) -> u32 {
        self.l
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Edges traversed by path `i`.
    pub fn path_edges(&self, i: usize) -> Vec<EdgeId> {
        path_edges(&self.paths[i])
    }

    /// Exhaustive pairwise check that no two paths share an edge.
    pub fn is_edge_disjoint(&self) -> bool {
        let sets: Vec<Vec<EdgeId>> = (0..self.len()).map(|i| self.path_edges(i)).collect();
        for i in 0..sets.len() {
            for j in (i + 1)..sets.len() {
                if sets[i].iter().any(|e| sets[j].contains(e)) {
                    return false;
                }
            }
        }
        true
    }
}

fn path_edges(path: &[Site]) -> Vec<EdgeId> {
    path.windows(2).filter_map(|w| EdgeId::new(w[0], w[1] - w[0])).collect()
}

fn template(d: usize, a: usize) -> Vec<Vec<Site>> {
    let ea = Site::unit(a);
    let mut paths = alloc::vec![alloc::vec![Site::ORIGIN, ea]];
    for b in (0..d).filter(|&b| b != a) {
        for s in [1, -1] {
            let eb = Site::unit(b).scale(s);
            paths.push(alloc::vec![Site::ORIGIN, eb, eb + ea, ea]);
        }
    }
    if d >= 2 {
        let eb = Site::unit((a + 1) % d);
        let (a1, a2, b1, b2) = (ea, ea.scale(2), eb, eb.scale(2));
        paths.push(alloc::vec![
            Site::ORIGIN,
            -a1,
            -a1 + b1,
            -a1 + b2,
            b2,
            a1 + b2,
            a2 + b2,
            a2 + b1,
            a2,
            a1,
        ]);
    }
    paths
}

/// `Γ_l(e)`: template paths of length at most `l`, translated to `e`.
pub fn path_family(d: usize, e: EdgeId, l: u32) -> Result<PathFamily> {
    if d == 0 || d > MAX_DIM {
        return Err(Error::param(format!("dimension must lie in 1..={MAX_DIM}, got {d}")));
    }
    let Some(a) = e.step().unit_axis().filter(|&a| a < d) else {
        return Err(Error::param("path families are defined for nearest-neighbour edges"));
    };
    if l < 1 {
        return Err(Error::param("path length bound must be >= 1"));
    }
    let paths = template(d, a)
        .into_iter()
        .filter(|p| (p.len() - 1) as u32 <= l)
        .map(|p| p.into_iter().map(|s| s + e.base()).collect())
        .collect();
    Ok(PathFamily { edge: e, paths, l })
}

/// `Γ_9(e)`: the full template of `2d` paths (a single path in `d = 1`).
pub fn default_path_family(d: usize, e: EdgeId) -> Result<PathFamily> {
    path_family(d, e, DEFAULT_PATH_LENGTH)
}

/// Optimized resistance `w_l(e)^-1` and the index of the minimizing path
/// (`None` when every path crosses a zero-weight edge and the value is `+inf`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathResistance {
    pub value: f64,
    pub argmin: Option<usize>,
}

pub fn path_resistance(env: &Environment, path: &[Site]) -> f64 {
    path_edges(path)
        .iter()
        .map(|e| {
            let w = env.edge_weight(e);
            if w > 0.0 {
                1.0 / w
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

pub fn omega_l_inverse(env: &Environment, family: &PathFamily) -> PathResistance {
    let mut best = PathResistance { value: f64::INFINITY, argmin: None };
    for (i, p) in family.paths.iter().enumerate() {
        let r = path_resistance(env, p);
        if r < best.value {
            best = PathResistance { value: r, argmin: Some(i) };
        }
    }
    best
}

fn incident_edges(d: usize, x: Site) -> impl Iterator<Item = EdgeId> {
    (0..d).flat_map(move |k| {
        let e = Site::unit(k);
        [EdgeId::new(x, e), EdgeId::new(x - e, e)].into_iter().flatten()
    })
}

/// `nu(x)`; `+inf` if an incident edge has zero weight.
pub fn nu(env: &Environment, x: Site) -> f64 {
    incident_edges(env.dim(), x)
        .map(|e| {
            let w = env.edge_weight(&e);
            if w > 0.0 {
                1.0 / w
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// `nu_l(x)` with the template family `Γ_l`.
pub fn nu_l(env: &Environment, x: Site, l: u32) -> Result<f64> {
    let d = env.dim();
    let mut s = 0.0;
    for e in incident_edges(d, x) {
        s += omega_l_inverse(env, &path_family(d, e, l)?).value;
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NuKind {
    Plain,
    PathOptimized(u32),
}

/// `nu` or `nu_l` evaluated on every site of a node box.
#[derive(Clone, Debug, PartialEq)]
pub struct NuMeasure {
    pub kind: NuKind,
    pub nodes: NodeBox,
    pub values: Vec<f64>,
}

impl NuMeasure {
    pub fn on_box(env: &Environment, kind: NuKind, nodes: NodeBox) -> Result<NuMeasure> {
        if nodes.dim != env.dim() {
            return Err(Error::Dimension { expected: env.dim(), found: nodes.dim });
        }
        let values = nodes
            .iter()
            .map(|x| match kind {
                NuKind::Plain => Ok(nu(env, x)),
                NuKind::PathOptimized(l) => nu_l(env, x, l),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(NuMeasure { kind, nodes, values })
    }

    /// Averaged norm `(|B|^-1 sum_B nu^p)^(1/p)`.
    pub fn averaged_norm(&self, p: f64) -> Result<f64> {
        averaged_norm(&self.values, p)
    }
}

/// `(|B|^-1 sum |f|^p)^(1/p)` over the entries of `values`; `max |f|` for `p = inf`.
pub fn averaged_norm(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("averaged norm over an empty set"));
    }
    if !(p > 0.0) {
        return Err(Error::param(format!("norm exponent must be > 0, got {p}")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let s: f64 = values.iter().map(|v| libm::pow(v.abs(), p)).sum();
    Ok(libm::pow(s / values.len() as f64, 1.0 / p))
}

/// Sobolev exponent `rho(d, q) = d / (d - 2 + d/q)`, for `d >= 2`, `q >= 1`.
pub fn rho(d: usize, q: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::domain(format!("rho(d, q) needs d >= 2, got d = {d}")));
    }
    if !(q >= 1.0) {
        return Err(Error::param(format!("rho(d, q) needs q >= 1, got q = {q}")));
    }
    let d = d as f64;
    Ok(d / (d - 2.0 + d / q))
}
