//! Experiment configuration files (TOML).
//!
//! ```toml
//! experiment = "poisson-convergence"
//! dimension = 2
//! epsilons = [0.125, 0.0625, 0.03125]
//! seeds = [1]
//! output_dir = "out/poisson"
//!
//! [law]
//! kind = "constant"
//! value = 1.0
//! ```
//!
//! Every optional table has explicit defaults, and the manifest echoes the
//! fully populated configuration.

use std::path::{Path, PathBuf};

use rcmhom_core::audit::AuditKind;
use rcmhom_core::env::LawSpec;
use rcmhom_core::lattice::Epsilon;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    PoissonConvergence,
    SpectralConvergence,
    AhomEstimate,
    MomentAudit,
    InequalityAudit,
    TrapDemo,
    LdpCumulant,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::PoissonConvergence => "poisson-convergence",
            Experiment::SpectralConvergence => "spectral-convergence",
            Experiment::AhomEstimate => "ahom-estimate",
            Experiment::MomentAudit => "moment-audit",
            Experiment::InequalityAudit => "inequality-audit",
            Experiment::TrapDemo => "trap-demo",
            Experiment::LdpCumulant => "ldp-cumulant",
        }
    }
}

/// Conductance law, mirroring [`LawSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawConfig {
    Constant { value: f64 },
    Pareto { gamma: f64 },
    TwoPoint { a: f64, b: f64, p: f64 },
    LongRange { alpha: f64, base: Box<LawConfig> },
    Periodic { values: Vec<f64> },
}

impl LawConfig {
    pub fn to_spec(&self) -> LawSpec {
        match self {
            LawConfig::Constant { value } => LawSpec::Constant(*value),
            LawConfig::Pareto { gamma } => LawSpec::IidParetoLower { gamma: *gamma },
            LawConfig::TwoPoint { a, b, p } => LawSpec::IidTwoPoint { a: *a, b: *b, p: *p },
            LawConfig::LongRange { alpha, base } => LawSpec::LongRangePolynomial { base: Box::new(base.to_spec()), alpha: *alpha },
            LawConfig::Periodic { values } => LawSpec::Periodic1D(values.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative residual of Poisson solves.
    pub poisson: f64,
    /// Relative eigen-residual.
    pub eigen: f64,
    /// Max-norm residual of the cell problems.
    pub cell: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { poisson: 1e-10, eigen: 1e-8, cell: 1e-9 }
    }
}

/// Potential `V` added to the operator (spectral and cumulant studies).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    None,
    /// `amplitude * prod_i cos(pi x_i / 2)`.
    Cosine { amplitude: f64 },
    /// `amplitude * |x|^2`.
    Quadratic { amplitude: f64 },
}

impl PotentialConfig {
    pub fn eval(&self, x: &[f64]) -> f64 {
        use std::f64::consts::PI;
        match self {
            PotentialConfig::None => 0.0,
            PotentialConfig::Cosine { amplitude } => amplitude * x.iter().map(|t| (PI * t / 2.0).cos()).product::<f64>(),
            PotentialConfig::Quadratic { amplitude } => amplitude * x.iter().map(|t| t * t).sum::<f64>(),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, PotentialConfig::None)
    }
}

/// RVE plan for the homogenized matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AhomConfig {
    /// Torus sides `L` (even, increasing).
    pub sides: Vec<i64>,
    pub seeds: Vec<u64>,
}

impl Default for AhomConfig {
    fn default() -> Self {
        AhomConfig { sides: vec![16, 32, 64], seeds: vec![1, 2, 3, 4] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Coarse reference grid resolution `m` (spacing `1/m`); the fine grid is `2m`.
    pub m: u32,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig { m: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Number of eigenvalues per eps.
    pub k: usize,
    /// Write each assembled operator as `(row, col, value)` triplets.
    pub dump_operator: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig { k: 1, dump_operator: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentConfig {
    /// Exponents `p` of `E[w^p]` (negative for lower moments).
    pub exponents: Vec<f64>,
    /// Box half-widths.
    pub sides: Vec<i64>,
    /// Exponents `q` of `E[nu^q]` and `E[nu_l^q]`.
    pub nu_exponents: Vec<f64>,
    pub path_length: u32,
    /// Upper and lower moment orders `(p, q)` for the `1/p + 1/q < 2/d` report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pq: Option<(f64, f64)>,
}

impl Default for MomentConfig {
    fn default() -> Self {
        MomentConfig { exponents: vec![-0.2], sides: vec![64, 128, 256], nu_exponents: vec![0.5], path_length: 9, pq: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKindConfig {
    Poincare,
    Sobolev,
    Moser,
}

impl AuditKindConfig {
    pub fn kind(&self) -> AuditKind {
        match self {
            AuditKindConfig::Poincare => AuditKind::Poincare,
            AuditKindConfig::Sobolev => AuditKind::Sobolev,
            AuditKindConfig::Moser => AuditKind::Moser,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub kinds: Vec<AuditKindConfig>,
    pub q: f64,
    pub path_length: u32,
    /// Random inputs besides the deterministic one.
    pub trials: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { kinds: vec![AuditKindConfig::Poincare, AuditKindConfig::Sobolev, AuditKindConfig::Moser], q: 2.0, path_length: 9, trials: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapConfig {
    pub m: u32,
    pub delta: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig { m: 2, delta: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpConfig {
    pub times: Vec<f64>,
    /// `alpha_t = t^alpha_exponent`.
    pub alpha_exponent: f64,
}

impl Default for LdpConfig {
    fn default() -> Self {
        LdpConfig { times: vec![1e2, 1e3, 1e4], alpha_exponent: 0.4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub law: LawConfig,
    pub dimension: usize,
    /// Lattice spacings `1/2^j`, strictly decreasing.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "no_potential")]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub ahom: AhomConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub moments: MomentConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub trap: TrapConfig,
    #[serde(default)]
    pub ldp: LdpConfig,
}

fn no_potential() -> PotentialConfig {
    PotentialConfig::None
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> LabResult<ExperimentConfig> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| LabError::validation(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> LabResult<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut config = ExperimentConfig::from_toml(&text)?;
        if config.output_dir.is_relative() {
            if let Some(parent) = path.parent() {
                config.output_dir = parent.join(&config.output_dir);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Lattice spacings as validated [`Epsilon`]s.
    pub fn epsilon_list(&self) -> LabResult<Vec<Epsilon>> {
        self.epsilons.iter().map(|&e| Epsilon::from_value(e).map_err(|err| LabError::validation(err.to_string()))).collect()
    }

    pub fn validate(&self) -> LabResult<()> {
        let fail = |m: String| Err(LabError::Validation(m));
        if !(1..=rcmhom_core::MAX_DIM).contains(&self.dimension) {
            return fail(format!("dimension must lie in 1..={}, got {}", rcmhom_core::MAX_DIM, self.dimension));
        }
        if self.seeds.is_empty() {
            return fail("seeds must be nonempty".into());
        }
        let needs_eps = !matches!(self.experiment, Experiment::AhomEstimate | Experiment::MomentAudit | Experiment::LdpCumulant);
        if needs_eps && self.epsilons.is_empty() {
            return fail(format!("{} needs a nonempty epsilon list", self.experiment.name()));
        }
        for eps in self.epsilon_list()? {
            if !eps.n().is_power_of_two() {
                return fail(format!("eps must be 1/2^j, got 1/{}", eps.n()));
            }
        }
        if self.epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return fail("epsilon list must be strictly decreasing".into());
        }
        let t = &self.tolerances;
        if [t.poisson, t.eigen, t.cell].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return fail("tolerances must be positive".into());
        }
        if self.spectral.k == 0 {
            return fail("spectral.k must be >= 1".into());
        }
        if self.ldp.times.iter().any(|t| t.is_nan() || *t <= 0.0) || !(0.0..0.5).contains(&self.ldp.alpha_exponent) || self.ldp.alpha_exponent == 0.0 {
            return fail("ldp needs positive times and 0 < alpha_exponent < 1/2".into());
        }
        if self.experiment == Experiment::InequalityAudit && self.audit.kinds.is_empty() {
            return fail("audit.kinds must be nonempty".into());
        }
        if self.experiment == Experiment::MomentAudit && (self.moments.sides.is_empty() || self.moments.sides.iter().any(|&n| n < 2)) {
            return fail("moments.sides must be nonempty with every side >= 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
experiment = "spectral-convergence"
dimension = 2
epsilons = [0.125, 0.0625]
seeds = [0]
output_dir = "out"

[law]
kind = "constant"
value = 1.0
"#;

    #[test]
    fn defaults_are_filled_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.spectral.k, 1);
        assert!(c.potential.is_none());
        assert_eq!(c.epsilon_list().unwrap()[1].n(), 16);
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn nested_laws_parse() {
        let text = MINIMAL.replace("kind = \"constant\"\nvalue = 1.0", "kind = \"long-range\"\nalpha = 5.0\nbase = { kind = \"pareto\", gamma = 0.5 }");
        let c = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(c.law.to_spec(), LawSpec::LongRangePolynomial { base: Box::new(LawSpec::IidParetoLower { gamma: 0.5 }), alpha: 5.0 });
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (from, to) in [
            ("[0.125, 0.0625]", "[0.0625, 0.125]"),
            ("[0.125, 0.0625]", "[0.125, 0.1]"),
            ("seeds = [0]", "seeds = []"),
            ("dimension = 2", "dimension = 7"),
            ("value = 1.0", "value = 1.0\nextra = 2"),
        ] {
            let err = ExperimentConfig::from_toml(&MINIMAL.replace(from, to)).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{from} -> {to}");
        }
    }
}
