//! Random conductance environments.
//!
//! An [`Environment`] never stores an edge table. The weight of an edge is a
//! pure function of the seed and the canonical [`EdgeId`] (after wrapping on
//! a torus), computed by a keyed counter-based hash. Symmetry
//! `w(x, z) = w(x + z, -z)` and independence from query order follow from
//! the canonical form.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::hash::{open_unit, KeyedHasher};
use crate::site::{cube_sites, EdgeId, Site, MAX_DIM};
use crate::{Error, Result};

/// Default truncation radius for long-range laws, in lattice units.
pub const DEFAULT_R_MAX: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// `(-n, n)^d ∩ Z^d` with zero Dirichlet data outside.
    Box,
    /// `Z^d / (2n Z)^d`.
    Torus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub dim: usize,
    /// Box half-width; the torus has side `2n`.
    pub n: i64,
    pub boundary: Boundary,
    /// Jump truncation radius. `None` means unbounded and is only accepted
    /// for nearest-neighbour laws.
    pub r_max: Option<u32>,
}

impl Geometry {
    pub fn boxed(dim: usize, n: i64) -> Result<Geometry> {
        Geometry { dim, n, boundary: Boundary::Box, r_max: Some(DEFAULT_R_MAX) }.validated()
    }

    pub fn torus(dim: usize, n: i64) -> Result<Geometry> {
        Geometry { dim, n, boundary: Boundary::Torus, r_max: Some(DEFAULT_R_MAX) }.validated()
    }

    pub fn with_r_max(mut self, r_max: Option<u32>) -> Geometry {
        self.r_max = r_max;
        self
    }

    fn validated(self) -> Result<Geometry> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::param(format!("dimension must lie in 1..={MAX_DIM}, got {}", self.dim)));
        }
        if self.n < 2 {
            return Err(Error::param(format!("box half-width must be >= 2, got {}", self.n)));
        }
        Ok(())
    }

    /// Side length of the torus (or the box diameter).
    pub fn side(&self) -> i64 {
        2 * self.n
    }

    pub fn wrap(&self, s: Site) -> Site {
        match self.boundary {
            Boundary::Box => s,
            Boundary::Torus => {
                let l = self.side();
                let mut c = s.0;
                c[..self.dim].iter_mut().for_each(|v| *v = v.rem_euclid(l));
                Site(c)
            }
        }
    }

    /// Interior membership for boxes; every site belongs to a torus.
    pub fn contains(&self, s: Site) -> bool {
        match self.boundary {
            Boundary::Box => s.coords(self.dim).iter().all(|c| c.abs() < self.n),
            Boundary::Torus => true,
        }
    }
}

/// The constructive family of conductance laws.
#[derive(Clone, Debug, PartialEq)]
pub enum LawSpec {
    /// Every nearest-neighbour edge has weight `c`.
    Constant(f64),
    /// i.i.d. `w = U^(1/gamma)`, `U` uniform on `(0,1)`; `E[w^-q] = gamma/(gamma-q)` for `q < gamma`.
    IidParetoLower { gamma: f64 },
    /// i.i.d. `w = a` with probability `p`, else `b`.
    IidTwoPoint { a: f64, b: f64, p: f64 },
    /// `w(e) = w~(e) / |e|^alpha` on all edges with `|e| <= r_max`, where `w~`
    /// is drawn from the (nearest-neighbour) base law.
    LongRangePolynomial { base: Box<LawSpec>, alpha: f64 },
    /// Nearest-neighbour edge `{x, x + e_k}` gets `values[x_k mod len]`.
    Periodic1D(Vec<f64>),
    /// Base law, except that nearest-neighbour edges crossing the boundary of
    /// the cube `{|x_i| <= m}` get weight `delta`.
    Trap { base: Box<LawSpec>, m: u32, delta: f64 },
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl LawSpec {
    pub fn is_nearest_neighbor(&self) -> bool {
        match self {
            LawSpec::LongRangePolynomial { .. } => false,
            LawSpec::Trap { base, .. } => base.is_nearest_neighbor(),
            _ => true,
        }
    }

    fn is_iid_base(&self) -> bool {
        matches!(self, LawSpec::Constant(_) | LawSpec::IidParetoLower { .. } | LawSpec::IidTwoPoint { .. })
    }

    pub fn validate(&self, geometry: &Geometry) -> Result<()> {
        match self {
            LawSpec::Constant(c) if !positive(*c) => Err(Error::param(format!("constant weight must be > 0, got {c}"))),
            LawSpec::IidParetoLower { gamma } if !positive(*gamma) => {
                Err(Error::param(format!("Pareto exponent must be > 0, got {gamma}")))
            }
            LawSpec::IidTwoPoint { a, b, p } => {
                if !positive(*a) || !positive(*b) {
                    Err(Error::param("two-point weights must be > 0"))
                } else if !(0.0..=1.0).contains(p) {
                    Err(Error::param(format!("two-point probability must lie in [0,1], got {p}")))
                } else {
                    Ok(())
                }
            }
            LawSpec::LongRangePolynomial { base, alpha } => {
                let d = geometry.dim as f64;
                if !(alpha.is_finite() && *alpha > d + 2.0) {
                    return Err(Error::param(format!("long-range exponent must exceed d+2 = {}, got {alpha}", d + 2.0)));
                }
                if !base.is_iid_base() {
                    return Err(Error::param("long-range base law must be constant, Pareto or two-point"));
                }
                let Some(r) = geometry.r_max else {
                    return Err(Error::param("long-range laws need a finite truncation radius"));
                };
                if r < 1 {
                    return Err(Error::param("truncation radius must be >= 1"));
                }
                if geometry.boundary == Boundary::Torus && geometry.side() <= 2 * r as i64 {
                    return Err(Error::param("torus side must exceed twice the truncation radius"));
                }
                base.validate(geometry)
            }
            LawSpec::Periodic1D(values) => {
                if values.is_empty() || !values.iter().all(|v| positive(*v)) {
                    return Err(Error::param("periodic weights must be a nonempty list of positive numbers"));
                }
                if geometry.boundary == Boundary::Torus && geometry.side() % values.len() as i64 != 0 {
                    return Err(Error::param("period must divide the torus side"));
                }
                Ok(())
            }
            LawSpec::Trap { base, m, delta } => {
                if !positive(*delta) {
                    return Err(Error::param(format!("trap weight must be > 0, got {delta}")));
                }
                if *m < 1 {
                    return Err(Error::param("trap radius must be >= 1"));
                }
                if geometry.boundary != Boundary::Box {
                    return Err(Error::param("traps are defined on box geometries"));
                }
                if geometry.n <= 2 * *m as i64 {
                    return Err(Error::param(format!("trap radius {m} too large for box half-width {}", geometry.n)));
                }
                if matches!(**base, LawSpec::Trap { .. }) {
                    return Err(Error::param("nested traps are not supported"));
                }
                base.validate(geometry)
            }
            _ => Ok(()),
        }
    }

    /// Draw for a single edge from an i.i.d. base law, ignoring its support.
    fn draw(&self, u: f64) -> f64 {
        match self {
            LawSpec::Constant(c) => *c,
            LawSpec::IidParetoLower { gamma } => libm::pow(u, 1.0 / gamma),
            LawSpec::IidTwoPoint { a, b, p } => {
                if u < *p {
                    *a
                } else {
                    *b
                }
            }
            _ => unreachable!("draw on a structured law"),
        }
    }
}

/// Analytic negative moment of the Pareto-lower law: `E[w^-q] = gamma/(gamma-q)`
/// for `q < gamma`, `+inf` otherwise.
pub fn pareto_negative_moment(gamma: f64, q: f64) -> f64 {
    if q < gamma {
        gamma / (gamma - q)
    } else {
        f64::INFINITY
    }
}

/// An immutable, seeded conductance field.
#[derive(Clone, Debug)]
pub struct Environment {
    law: LawSpec,
    geometry: Geometry,
    seed: u64,
    shift: Site,
    steps: Vec<Site>,
    overrides: BTreeMap<EdgeId, f64>,
}

/// Builds an environment after validating the law against the geometry.
pub fn sample_environment(law: LawSpec, geometry: Geometry, seed: u64) -> Result<Environment> {
    geometry.validate()?;
    law.validate(&geometry)?;
    let steps = support_steps(&law, &geometry);
    Ok(Environment { law, geometry, seed, shift: Site::ORIGIN, steps, overrides: BTreeMap::new() })
}

/// The base environment with a trap of radius `m` and depth `delta` at the origin.
pub fn trap_environment(base: LawSpec, geometry: Geometry, m: u32, delta: f64, seed: u64) -> Result<Environment> {
    sample_environment(LawSpec::Trap { base: Box::new(base), m, delta }, geometry, seed)
}

fn support_steps(law: &LawSpec, geometry: &Geometry) -> Vec<Site> {
    let d = geometry.dim;
    if law.is_nearest_neighbor() {
        let mut v = Vec::with_capacity(2 * d);
        for k in 0..d {
            v.push(Site::unit(k));
            v.push(-Site::unit(k));
        }
        v
    } else {
        let r = geometry.r_max.unwrap_or(DEFAULT_R_MAX) as i64;
        cube_sites(d, r).filter(|z| !z.is_zero() && z.norm2() <= r * r).collect()
    }
}

fn in_cube(s: &Site, m: i64) -> bool {
    s.0.iter().all(|c| c.abs() <= m)
}

impl Environment {
    pub fn law(&self) -> &LawSpec {
        &self.law
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Steps `z` that may carry positive weight (both signs).
    pub fn support_steps(&self) -> &[Site] {
        &self.steps
    }

    /// The same environment viewed from `shift`: `w'(x, z) = w(x + shift, z)`.
    pub fn translated(&self, shift: Site) -> Environment {
        let mut e = self.clone();
        e.shift = self.shift + shift;
        e
    }

    /// The same environment with the weight of one edge replaced. The edge
    /// is given in the environment's own (untranslated) coordinates and must
    /// be a step the law supports.
    pub fn with_edge_weight(mut self, edge: EdgeId, weight: f64) -> Result<Environment> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::param(format!("edge weight must be finite and >= 0, got {weight}")));
        }
        if !self.steps.contains(&edge.step()) {
            return Err(Error::param("edge step is outside the support of the law"));
        }
        let edge = self.canonical(edge);
        self.overrides.insert(edge, weight);
        Ok(self)
    }

    fn canonical(&self, edge: EdgeId) -> EdgeId {
        match self.geometry.boundary {
            Boundary::Box => edge,
            Boundary::Torus => EdgeId::new(self.geometry.wrap(edge.base()), edge.step()).unwrap_or(edge),
        }
    }

    /// Conductance `w_{x,z}`; zero outside the support of the law.
    pub fn conductance(&self, x: Site, z: Site) -> Result<f64> {
        if z.is_zero() {
            return Err(Error::domain("conductance of the zero step"));
        }
        Ok(self.weight(x, z))
    }

    /// Unchecked variant of [`Environment::conductance`]; `z` must be nonzero.
    #[inline]
    pub fn weight(&self, x: Site, z: Site) -> f64 {
        let Some(edge) = EdgeId::new(x + self.shift, z) else {
            return 0.0;
        };
        let edge = self.canonical(edge);
        if let Some(&w) = self.overrides.get(&edge) {
            return w;
        }
        self.law_weight(&self.law, &edge)
    }

    pub fn edge_weight(&self, e: &EdgeId) -> f64 {
        self.weight(e.base(), e.step())
    }

    fn uniform(&self, e: &EdgeId) -> f64 {
        open_unit(KeyedHasher::new(self.seed).site(&e.base()).site(&e.step()).finish())
    }

    fn law_weight(&self, law: &LawSpec, e: &EdgeId) -> f64 {
        match law {
            LawSpec::Constant(_) | LawSpec::IidParetoLower { .. } | LawSpec::IidTwoPoint { .. } => {
                if e.is_nearest_neighbor() {
                    law.draw(self.uniform(e))
                } else {
                    0.0
                }
            }
            LawSpec::LongRangePolynomial { base, alpha } => {
                let r = self.geometry.r_max.unwrap_or(DEFAULT_R_MAX) as i64;
                let len2 = e.step().norm2();
                if len2 > r * r {
                    0.0
                } else {
                    base.draw(self.uniform(e)) / libm::pow(len2 as f64, alpha / 2.0)
                }
            }
            LawSpec::Periodic1D(values) => match e.step().unit_axis() {
                Some(k) => values[e.base().0[k].rem_euclid(values.len() as i64) as usize],
                None => 0.0,
            },
            LawSpec::Trap { base, m, delta } => {
                let m = *m as i64;
                if e.is_nearest_neighbor() && in_cube(&e.base(), m) != in_cube(&e.tip(), m) {
                    *delta
                } else {
                    self.law_weight(base, e)
                }
            }
        }
    }

    /// Total jump rate `sum_z w_{x,z}` out of `x`.
    pub fn total_rate(&self, x: Site) -> f64 {
        self.steps.iter().map(|&z| self.weight(x, z)).sum()
    }
}

/// Sample mean of a per-edge statistic together with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub count: usize,
}

/// Spatial average of `w(e)^exponent` over nearest-neighbour edges with both
/// endpoints in the box `region` (`(-n, n)^d`). Returns `+inf` as mean when
/// some weight is zero and the exponent is negative.
pub fn empirical_moment(env: &Environment, exponent: f64, region: &Geometry) -> Result<MomentEstimate> {
    region.validate()?;
    if region.dim != env.dim() {
        return Err(Error::Dimension { expected: env.dim(), found: region.dim });
    }
    let d = region.dim;
    let (mut count, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let mut infinite = false;
    for x in cube_sites(d, region.n - 1) {
        for k in 0..d {
            if x.0[k] + 1 >= region.n {
                continue;
            }
            let w = env.weight(x, Site::unit(k));
            if w == 0.0 && exponent < 0.0 {
                infinite = true;
                continue;
            }
            let v = libm::pow(w, exponent);
            count += 1;
            let delta = v - mean;
            mean += delta / count as f64;
            m2 += delta * (v - mean);
        }
    }
    if count == 0 && !infinite {
        return Err(Error::domain("box contains no nearest-neighbour edges"));
    }
    if infinite {
        return Ok(MomentEstimate { mean: f64::INFINITY, std_error: f64::INFINITY, count });
    }
    let var = if count > 1 { m2 / (count - 1) as f64 } else { 0.0 };
    Ok(MomentEstimate { mean, std_error: libm::sqrt(var / count as f64), count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn env(law: LawSpec, dim: usize, n: i64, seed: u64) -> Environment {
        sample_environment(law, Geometry::boxed(dim, n).unwrap(), seed).unwrap()
    }

    #[test]
    fn constant_law_weights() {
        let e = env(LawSpec::Constant(1.0), 2, 4, 0);
        for x in cube_sites(2, 3) {
            for &z in e.support_steps() {
                assert_eq!(e.weight(x, z), 1.0);
            }
        }
        let x = Site::from_slice(&[0, 0]);
        assert_eq!(e.conductance(x, Site::unit(0)).unwrap(), 1.0);
        assert_eq!(e.weight(x, Site::from_slice(&[1, 1])), 0.0);
    }

    #[test]
    fn zero_step_is_a_domain_error() {
        let e = env(LawSpec::Constant(1.0), 2, 4, 0);
        assert!(matches!(e.conductance(Site::ORIGIN, Site::ORIGIN), Err(Error::Domain(_))));
    }

    #[test]
    fn repeated_queries_are_identical() {
        let e = env(LawSpec::IidParetoLower { gamma: 0.3 }, 2, 8, 42);
        let x = Site::from_slice(&[1, -2]);
        let a = e.weight(x, Site::unit(1));
        let b = e.weight(x, Site::unit(1));
        assert_eq!(a.to_bits(), b.to_bits());
        let e2 = env(LawSpec::IidParetoLower { gamma: 0.3 }, 2, 8, 42);
        assert_eq!(a.to_bits(), e2.weight(x, Site::unit(1)).to_bits());
        let e3 = env(LawSpec::IidParetoLower { gamma: 0.3 }, 2, 8, 43);
        assert_ne!(a, e3.weight(x, Site::unit(1)));
    }

    #[test]
    fn long_range_formula() {
        let e = env(
            LawSpec::LongRangePolynomial { base: Box::new(LawSpec::Constant(1.0)), alpha: 5.0 },
            1,
            16,
            0,
        );
        let w = e.conductance(Site::ORIGIN, Site::from_slice(&[2])).unwrap();
        assert!((w - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(e.weight(Site::ORIGIN, Site::from_slice(&[9])), 0.0);
        assert_eq!(e.support_steps().len(), 16);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let g = Geometry::boxed(2, 8).unwrap();
        let lr = LawSpec::LongRangePolynomial { base: Box::new(LawSpec::Constant(1.0)), alpha: 4.0 };
        assert!(matches!(sample_environment(lr, g.clone(), 0), Err(Error::Parameter(_))));
        assert!(sample_environment(LawSpec::IidParetoLower { gamma: 0.0 }, g.clone(), 0).is_err());
        assert!(sample_environment(LawSpec::IidParetoLower { gamma: -1.0 }, g.clone(), 0).is_err());
        assert!(sample_environment(LawSpec::Periodic1D(vec![]), g.clone(), 0).is_err());
        assert!(trap_environment(LawSpec::Constant(1.0), g.clone(), 4, 1e-3, 0).is_err());
        assert!(trap_environment(LawSpec::Constant(1.0), g, 2, 0.0, 0).is_err());
        assert!(Geometry::boxed(2, 1).is_err());
        assert!(Geometry::boxed(0, 4).is_err());
    }

    #[test]
    fn trap_crossing_edges() {
        let g = Geometry::boxed(2, 8).unwrap();
        let e = trap_environment(LawSpec::Constant(1.0), g, 2, 1e-6, 0).unwrap();
        let mut crossing = 0;
        for x in cube_sites(2, 7) {
            for k in 0..2 {
                let w = e.weight(x, Site::unit(k));
                if w == 1e-6 {
                    crossing += 1;
                } else {
                    assert_eq!(w, 1.0);
                }
            }
        }
        assert_eq!(crossing, 4 * (2 * 2 + 1));
    }

    #[test]
    fn trap_with_base_value_is_a_no_op() {
        let g = Geometry::boxed(2, 8).unwrap();
        let t = trap_environment(LawSpec::Constant(1.0), g.clone(), 2, 1.0, 3).unwrap();
        let c = sample_environment(LawSpec::Constant(1.0), g, 3).unwrap();
        for x in cube_sites(2, 7) {
            for &z in c.support_steps() {
                assert_eq!(t.weight(x, z), c.weight(x, z));
            }
        }
    }

    #[test]
    fn torus_wraps_weights() {
        let g = Geometry::torus(2, 4).unwrap();
        let e = sample_environment(LawSpec::IidTwoPoint { a: 1.0, b: 0.25, p: 0.5 }, g, 9).unwrap();
        let x = Site::from_slice(&[7, 3]);
        let far = Site::from_slice(&[7 - 8, 3 + 16]);
        assert_eq!(e.weight(x, Site::unit(0)), e.weight(far, Site::unit(0)));
        // the edge {7, 8 ≡ 0} seen from both ends
        assert_eq!(e.weight(x, Site::unit(0)), e.weight(Site::from_slice(&[0, 3]), -Site::unit(0)));
    }

    #[test]
    fn periodic_weights_follow_the_edge_coordinate() {
        let g = Geometry::torus(1, 4).unwrap();
        let e = sample_environment(LawSpec::Periodic1D(vec![1.0, 1.0 / 3.0]), g, 0).unwrap();
        for x in 0..8 {
            let w = e.weight(Site::from_slice(&[x]), Site::unit(0));
            assert_eq!(w, if x % 2 == 0 { 1.0 } else { 1.0 / 3.0 });
        }
    }

    #[test]
    fn constant_moment_is_exact() {
        let e = env(LawSpec::Constant(2.0), 2, 8, 0);
        let m = empirical_moment(&e, -0.5, &Geometry::boxed(2, 8).unwrap()).unwrap();
        assert!((m.mean - libm::pow(2.0, -0.5)).abs() < 1e-15);
        assert_eq!(m.count, 2 * 15 * 14);
    }
}
