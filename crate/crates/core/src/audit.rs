//! Empirical audits of the weighted Poincaré, Sobolev and `l^inf` (Moser)
//! bounds on `Q_eps`. Each audit reports the ratio of the left side to the
//! explicit factors of the right side; the unknown constant is what is left.
//!
//! With `B` the interior nodes, `<.>_p` the averaged norm over `B` and `E`
//! the Dirichlet energy:
//!
//! ```text
//! poincare (d >= 2): ||u||_2^2          / (<nu_l>_{d/2} E(u))
//! poincare (d = 1):  ||u||_2^2          / (<nu>_1 E(u))
//! sobolev  (d >= 2): ||u^2||_{rho(d,q)} / (<nu_l>_q E(u))
//! sobolev  (d = 1):  max u^2            / (<nu>_1 E(u))
//! moser    (d >= 2): max |u| / ((1 ∨ <nu_l>_q ||f||_inf)^kappa ||u||_2^gamma),
//!                    where -L^eps u = f
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::env::Environment;
use crate::hash::{digest_f64, open_unit, KeyedHasher};
use crate::lattice::{assemble_operator, dirichlet_energy, grid_norm, Epsilon, GridFunction};
use crate::paths::{averaged_norm, rho, NuKind, NuMeasure};
use crate::site::Site;
use crate::solve::{poisson_solve, DEFAULT_POISSON_TOL};
use crate::{Error, Result};

/// Modes per axis in [`AuditInput::RandomModes`].
const MODES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditKind {
    Poincare,
    Sobolev,
    Moser,
}

impl AuditKind {
    pub fn name(&self) -> &'static str {
        match self {
            AuditKind::Poincare => "poincare",
            AuditKind::Sobolev => "sobolev",
            AuditKind::Moser => "moser",
        }
    }
}

/// Test functions (Poincaré, Sobolev) and sources (Moser).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuditInput {
    /// `prod_i cos(pi x_i / 2)`.
    Bump,
    /// `sum_k c_k prod_i sin(k_i pi (x_i + 1) / 2)` over `k ∈ {1..3}^d`, with
    /// `c_k = (2U - 1) / |k|^2` drawn from `seed`.
    RandomModes { seed: u64 },
    /// Indicator of the lattice cube `{|k_i| <= m}` (not rescaled with eps).
    CubeIndicator { m: u32 },
    /// `f = 1`.
    ConstantSource,
    /// `f = ±1` on a `blocks^d` partition of `Q`, signs drawn from `seed`.
    RandomSigns { blocks: u32, seed: u64 },
}

impl AuditInput {
    pub fn is_source(&self) -> bool {
        matches!(self, AuditInput::ConstantSource | AuditInput::RandomSigns { .. })
    }

    pub fn label(&self) -> String {
        match self {
            AuditInput::Bump => "bump".into(),
            AuditInput::RandomModes { seed } => format!("random-modes:{seed}"),
            AuditInput::CubeIndicator { m } => format!("cube-indicator:{m}"),
            AuditInput::ConstantSource => "constant-source".into(),
            AuditInput::RandomSigns { blocks, seed } => format!("random-signs:{blocks}:{seed}"),
        }
    }

    /// Values on the interior nodes of `Q_eps`.
    pub fn grid(&self, eps: Epsilon, dim: usize) -> GridFunction {
        use core::f64::consts::PI;
        match *self {
            AuditInput::Bump => GridFunction::sample(eps, dim, &|x: &[f64]| x.iter().map(|&t| libm::cos(PI * t / 2.0)).product()),
            AuditInput::RandomModes { seed } => {
                let modes: Vec<(Vec<f64>, f64)> = (0..MODES.pow(dim as u32))
                    .map(|m| {
                        let k: Vec<f64> = (0..dim).map(|i| (m / MODES.pow(i as u32) % MODES + 1) as f64).collect();
                        let u = open_unit(KeyedHasher::new(seed).word(m as u64).finish());
                        let k2: f64 = k.iter().map(|v| v * v).sum();
                        (k, (2.0 * u - 1.0) / k2)
                    })
                    .collect();
                GridFunction::sample(eps, dim, &|x: &[f64]| {
                    modes
                        .iter()
                        .map(|(k, c)| c * k.iter().zip(x).map(|(&ki, &xi)| libm::sin(ki * PI * (xi + 1.0) / 2.0)).product::<f64>())
                        .sum()
                })
            }
            AuditInput::CubeIndicator { m } => {
                let mut g = GridFunction::zeros(eps, dim);
                let nodes = g.nodes();
                for (i, k) in nodes.iter().enumerate() {
                    if k.linf() <= m as i64 {
                        g.values_mut()[i] = 1.0;
                    }
                }
                g
            }
            AuditInput::ConstantSource => GridFunction::sample(eps, dim, &|_: &[f64]| 1.0),
            AuditInput::RandomSigns { blocks, seed } => {
                // exact averages of the piecewise constant field over the
                // cells [x - eps/2, x + eps/2]^d, so block faces that fall on
                // nodes are split evenly instead of assigned to one side
                let b = blocks.max(1) as i64;
                let width = 2.0 / b as f64;
                let half = eps.value() / 2.0;
                let axis_weights = |t: f64| -> Vec<(i64, f64)> {
                    let (lo, hi) = ((t - half).max(-1.0), (t + half).min(1.0));
                    let first = (libm::floor((lo + 1.0) / width) as i64).clamp(0, b - 1);
                    let last = (libm::floor((hi + 1.0) / width) as i64).clamp(0, b - 1);
                    (first..=last)
                        .map(|j| {
                            let (a, c) = (-1.0 + j as f64 * width, -1.0 + (j + 1) as f64 * width);
                            (j, (hi.min(c) - lo.max(a)).max(0.0) / (hi - lo))
                        })
                        .collect()
                };
                let mut g = GridFunction::zeros(eps, dim);
                let nodes = g.nodes();
                for (i, k) in nodes.iter().enumerate() {
                    let per_axis: Vec<Vec<(i64, f64)>> = (0..dim).map(|a| axis_weights(k.0[a] as f64 * eps.value())).collect();
                    let combos: usize = per_axis.iter().map(|w| w.len()).product();
                    let mut value = 0.0;
                    for mut c in 0..combos {
                        let mut cell = Site::ORIGIN;
                        let mut w = 1.0;
                        for (a, list) in per_axis.iter().enumerate() {
                            let (j, wa) = list[c % list.len()];
                            c /= list.len();
                            cell.0[a] = j;
                            w *= wa;
                        }
                        let sign = if KeyedHasher::new(seed).site(&cell).finish() & 1 == 0 { 1.0 } else { -1.0 };
                        value += w * sign;
                    }
                    g.values_mut()[i] = value;
                }
                g
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSpec {
    pub kind: AuditKind,
    pub epsilons: Vec<Epsilon>,
    /// Integrability exponent of `nu_l` (Sobolev, Moser).
    pub q: f64,
    /// Path length bound for `nu_l`.
    pub l: u32,
    pub inputs: Vec<AuditInput>,
    /// Exponents of the Moser bound.
    pub kappa: f64,
    pub gamma: f64,
    pub poisson_tol: f64,
}

impl AuditSpec {
    /// Default inputs: the bump plus `trials` random mode series for
    /// Poincaré/Sobolev; `f = 1` plus `trials` random sign fields on `4^d`
    /// blocks for Moser.
    pub fn new(kind: AuditKind, epsilons: Vec<Epsilon>, q: f64, l: u32, trials: usize, seed: u64) -> AuditSpec {
        let mut inputs = Vec::with_capacity(trials + 1);
        let hasher = KeyedHasher::new(seed);
        if kind == AuditKind::Moser {
            inputs.push(AuditInput::ConstantSource);
            inputs.extend((0..trials).map(|t| AuditInput::RandomSigns { blocks: 4, seed: hasher.word(t as u64).finish() }));
        } else {
            inputs.push(AuditInput::Bump);
            inputs.extend((0..trials).map(|t| AuditInput::RandomModes { seed: hasher.word(t as u64).finish() }));
        }
        AuditSpec { kind, epsilons, q, l, inputs, kappa: 1.0, gamma: 1.0, poisson_tol: DEFAULT_POISSON_TOL }
    }

    pub fn with_inputs(mut self, inputs: Vec<AuditInput>) -> AuditSpec {
        self.inputs = inputs;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditPoint {
    pub eps: Epsilon,
    pub input: AuditInput,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub kind: AuditKind,
    pub epsilons: Vec<f64>,
    /// Largest ratio over the inputs, per eps.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub argmax_input: AuditInput,
    /// Digest of the maximizing input's grid values.
    pub argmax_input_digest: u64,
    pub points: Vec<AuditPoint>,
}

impl AuditReport {
    /// `|r_{i+1} / r_i - 1|` for successive eps.
    pub fn relative_changes(&self) -> Vec<f64> {
        self.ratios.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).collect()
    }
}

fn validate(spec: &AuditSpec, dim: usize) -> Result<()> {
    if spec.epsilons.is_empty() {
        return Err(Error::param("audit needs at least one eps"));
    }
    if spec.inputs.is_empty() {
        return Err(Error::param("audit needs at least one input (trials >= 1)"));
    }
    let want_source = spec.kind == AuditKind::Moser;
    if spec.inputs.iter().any(|i| i.is_source() != want_source) {
        return Err(Error::param(format!("inputs do not match the {} audit", spec.kind.name())));
    }
    if spec.kind != AuditKind::Poincare && dim >= 2 && !(spec.q >= dim as f64 / 2.0) {
        return Err(Error::param(format!("q must be >= d/2 = {}, got {}", dim as f64 / 2.0, spec.q)));
    }
    if spec.kind == AuditKind::Moser && dim < 2 {
        return Err(Error::domain("the Moser bound is stated for d >= 2; use the Sobolev audit in d = 1"));
    }
    if spec.l < 1 {
        return Err(Error::param("path length bound must be >= 1"));
    }
    Ok(())
}

fn max_abs(u: &GridFunction) -> f64 {
    u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn inequality_audit(env: &Environment, spec: &AuditSpec) -> Result<AuditReport> {
    let d = env.dim();
    validate(spec, d)?;
    let kind = if d == 1 { NuKind::Plain } else { NuKind::PathOptimized(spec.l) };
    let mut points = Vec::new();
    let mut ratios = Vec::with_capacity(spec.epsilons.len());
    let mut best: Option<(f64, AuditInput, u64)> = None;
    for &eps in &spec.epsilons {
        let nodes = GridFunction::zeros(eps, d).nodes();
        let nu = NuMeasure::on_box(env, kind, nodes)?;
        let op = if spec.kind == AuditKind::Moser { Some(assemble_operator(env, eps, None)?) } else { None };
        let mut eps_max = f64::NEG_INFINITY;
        for input in &spec.inputs {
            let g = input.grid(eps, d);
            let ratio = match spec.kind {
                AuditKind::Poincare => {
                    let p = if d == 1 { 1.0 } else { d as f64 / 2.0 };
                    let energy = positive_energy(env, eps, &g)?;
                    let l2 = grid_norm(&g, 2.0)?;
                    l2 * l2 / (averaged_norm(&nu.values, p)? * energy)
                }
                AuditKind::Sobolev => {
                    let energy = positive_energy(env, eps, &g)?;
                    if d == 1 {
                        let m = max_abs(&g);
                        m * m / (averaged_norm(&nu.values, 1.0)? * energy)
                    } else {
                        let sq = GridFunction::from_values(eps, d, g.values().iter().map(|v| v * v).collect())?;
                        grid_norm(&sq, rho(d, spec.q)?)? / (averaged_norm(&nu.values, spec.q)? * energy)
                    }
                }
                AuditKind::Moser => {
                    let u = poisson_solve(op.as_ref().expect("assembled"), &g, spec.poisson_tol)?;
                    let env_factor = (averaged_norm(&nu.values, spec.q)? * max_abs(&g)).max(1.0);
                    max_abs(&u) / (libm::pow(env_factor, spec.kappa) * libm::pow(grid_norm(&u, 2.0)?, spec.gamma))
                }
            };
            points.push(AuditPoint { eps, input: *input, ratio });
            if ratio > eps_max {
                eps_max = ratio;
            }
            if best.as_ref().is_none_or(|b| ratio > b.0) {
                best = Some((ratio, *input, digest_f64(g.values())));
            }
        }
        ratios.push(eps_max);
    }
    let (max_ratio, argmax_input, argmax_input_digest) = best.expect("nonempty audit");
    Ok(AuditReport {
        kind: spec.kind,
        epsilons: spec.epsilons.iter().map(|e| e.value()).collect(),
        ratios,
        max_ratio,
        argmax_input,
        argmax_input_digest,
        points,
    })
}

fn positive_energy(env: &Environment, eps: Epsilon, g: &GridFunction) -> Result<f64> {
    let e = dirichlet_energy(env, eps, g)?;
    if !(e > 0.0) {
        return Err(Error::domain("test function has zero energy"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, trap_environment, Geometry, LawSpec};

    fn eps_list(ns: &[u32]) -> Vec<Epsilon> {
        ns.iter().map(|&n| Epsilon::inverse_of(n).unwrap()).collect()
    }

    #[test]
    fn constant_poincare_bump_is_stable() {
        let env = sample_environment(LawSpec::Constant(1.0), Geometry::boxed(2, 32).unwrap(), 0).unwrap();
        let spec = AuditSpec::new(AuditKind::Poincare, eps_list(&[8, 16, 32]), 1.0, 9, 0, 0);
        let r = inequality_audit(&env, &spec).unwrap();
        // the sampled bump is a discrete eigenfunction: ratio = 1 / (4 lambda_1^eps)
        for (ratio, n) in r.ratios.iter().zip([8.0, 16.0, 32.0]) {
            let s = libm::sin(core::f64::consts::PI / (4.0 * n));
            let lambda = 8.0 * n * n * s * s;
            assert!((ratio - 1.0 / (4.0 * lambda)).abs() < 1e-12);
        }
        assert!(r.relative_changes().iter().all(|&c| c < 0.05));
    }

    #[test]
    fn trap_indicator_defeats_the_plain_measure() {
        let n = 64;
        let eps = eps_list(&[n]);
        let input = alloc::vec![AuditInput::CubeIndicator { m: 2 }];
        let spec = AuditSpec::new(AuditKind::Poincare, eps, 1.0, 1, 0, 0).with_inputs(input);
        let plain = sample_environment(LawSpec::Constant(1.0), Geometry::boxed(2, n as i64).unwrap(), 0).unwrap();
        let trap = trap_environment(LawSpec::Constant(1.0), Geometry::boxed(2, n as i64).unwrap(), 2, 1e-6, 0).unwrap();
        let r_plain = inequality_audit(&plain, &spec).unwrap().max_ratio;
        let r_trap = inequality_audit(&trap, &spec).unwrap().max_ratio;
        assert!(r_trap >= 1e3 * r_plain, "{r_trap} vs {r_plain}");
    }

    #[test]
    fn input_kind_mismatch_is_rejected() {
        let env = sample_environment(LawSpec::Constant(1.0), Geometry::boxed(2, 8).unwrap(), 0).unwrap();
        let spec = AuditSpec::new(AuditKind::Moser, eps_list(&[8]), 1.2, 9, 1, 0).with_inputs(alloc::vec![AuditInput::Bump]);
        assert!(inequality_audit(&env, &spec).is_err());
        let low_q = AuditSpec::new(AuditKind::Sobolev, eps_list(&[8]), 0.5, 9, 1, 0);
        assert!(inequality_audit(&env, &low_q).is_err());
    }

    #[test]
    fn random_signs_average_over_faces() {
        let g = AuditInput::RandomSigns { blocks: 4, seed: 5 }.grid(Epsilon::inverse_of(8).unwrap(), 1);
        let v = g.values();
        // faces at -1/2, 0, 1/2 sit on nodes 3, 7, 11; every other node is inside a block
        for (i, &x) in v.iter().enumerate() {
            if [3, 7, 11].contains(&i) {
                assert_eq!(x, 0.5 * (v[i - 1] + v[i + 1]));
            } else {
                assert_eq!(x.abs(), 1.0);
            }
        }
        assert!(v[..3].iter().all(|&x| x == v[0]));
    }
}
