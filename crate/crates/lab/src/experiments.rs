//! The seven experiments. Each one runs as a sequence of timed stages; a
//! failing stage ends the run with a failure record in the manifest, while
//! files written by earlier stages stay in place.

use std::f64::consts::PI;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DMatrix;
use rayon::prelude::*;
use rcmhom_core::audit::{inequality_audit, AuditSpec};
use rcmhom_core::corrector::{estimate_cell, nondegeneracy_bound, summarize_cells, AHomEstimate, CellEstimate};
use rcmhom_core::env::{empirical_moment, pareto_negative_moment, sample_environment, trap_environment, Environment, Geometry, LawSpec};
use rcmhom_core::lattice::{assemble_operator, embed, restrict, ContinuumFn, Epsilon, GridOperator, NodeBox};
use rcmhom_core::paths::{averaged_norm, NuKind, NuMeasure};
use rcmhom_core::solve::{eigs_smallest, homogenized_eigs, homogenized_solve, poisson_solve, HomogenizedProblem, RefField, RefGrid};
use rcmhom_core::walker::{cumulant_target, lattice_cumulant, CumulantWarning};
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::output::{Cell, FailureRecord, OutputDir, RunManifest, StageTime, Table};

type Rows = Vec<Vec<Cell>>;

pub const MANIFEST_FILE: &str = "manifest.json";

struct Run<'a> {
    config: &'a ExperimentConfig,
    out: OutputDir,
    stages: Vec<StageTime>,
}

/// Error tagged with the stage that raised it.
struct StageError {
    stage: String,
    error: LabError,
}

impl<'a> Run<'a> {
    fn stage<T>(&mut self, name: &str, body: impl FnOnce(&mut OutputDir) -> LabResult<T>) -> Result<T, StageError> {
        let start = Instant::now();
        let result = body(&mut self.out);
        self.stages.push(StageTime { stage: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        result.map_err(|error| StageError { stage: name.to_string(), error })
    }

    fn law(&self) -> LawSpec {
        self.config.law.to_spec()
    }

    fn dim(&self) -> usize {
        self.config.dimension
    }

    fn boxed_env(&self, n: i64, seed: u64) -> LabResult<Environment> {
        Ok(sample_environment(self.law(), Geometry::boxed(self.dim(), n)?, seed)?)
    }

    fn grid(&self) -> LabResult<RefGrid> {
        Ok(RefGrid::new(self.dim(), self.config.reference.m)?)
    }
}

/// Runs the configured experiment and writes `manifest.json` next to its
/// outputs. Invalid configurations are rejected before anything is written;
/// stage failures are returned inside the manifest.
pub fn run(config: &ExperimentConfig) -> LabResult<RunManifest> {
    let epsilons = config.epsilon_list()?;
    // parameter checks the core performs lazily are surfaced as validation errors
    config.law.to_spec().validate(&Geometry::boxed(config.dimension, 4).map_err(|e| LabError::validation(e.to_string()))?).map_err(|e| LabError::validation(e.to_string()))?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut run = Run { config, out: OutputDir::create(&config.output_dir)?, stages: Vec::new() };
    let result = match config.experiment {
        Experiment::PoissonConvergence => poisson_convergence(&mut run, &epsilons),
        Experiment::SpectralConvergence => spectral_convergence(&mut run, &epsilons),
        Experiment::AhomEstimate => ahom_stage(&mut run).map(|_| ()),
        Experiment::MomentAudit => moment_audit(&mut run),
        Experiment::InequalityAudit => audit(&mut run, &epsilons),
        Experiment::TrapDemo => trap_demo(&mut run, &epsilons),
        Experiment::LdpCumulant => ldp_cumulant(&mut run),
    };
    let failure = result.err().map(|e| FailureRecord { stage: e.stage, exit_code: e.error.exit_code(), message: e.error.to_string() });
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: config.experiment.name().to_string(),
        started_unix,
        config: toml::Value::try_from(config).expect("configuration serializes"),
        stages: run.stages,
        outputs: run.out.records().to_vec(),
        failure,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    let path = config.output_dir.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    Ok(manifest)
}

/// Cells of a study, in the order rows are emitted.
fn cells(epsilons: &[Epsilon], seeds: &[u64]) -> Vec<(Epsilon, u64)> {
    epsilons.iter().flat_map(|&e| seeds.iter().map(move |&s| (e, s))).collect()
}

fn largest_n(epsilons: &[Epsilon]) -> i64 {
    epsilons.iter().map(|e| e.n() as i64).max().unwrap_or(2)
}

#[derive(Serialize)]
struct AhomSummary {
    matrix: Vec<Vec<f64>>,
    d_eff: Vec<Vec<f64>>,
    lambda_min: f64,
    asymmetry: f64,
    deviations: Vec<f64>,
    side_means: Vec<(i64, Vec<Vec<f64>>)>,
    law: String,
    seeds: Vec<u64>,
    side: i64,
    truncation: Option<u32>,
    nondegeneracy_bound: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn cell_table(d: usize, cells: &[CellEstimate]) -> Table {
    let mut columns = vec!["side".to_string(), "seed".to_string()];
    for i in 0..d {
        for j in 0..d {
            columns.push(format!("a{i}{j}"));
        }
    }
    columns.push("lambda_min".into());
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = Table::new(&names);
    for c in cells {
        let mut row: Vec<Cell> = vec![c.side.into(), c.seed.into()];
        row.extend(c.matrix.transpose().iter().map(|&v| Cell::Num(v)));
        row.push(c.lambda_min.into());
        t.push(row);
    }
    t
}

/// RVE estimate of `A_hom`; writes `ahom_cells.csv` and `ahom.json`.
fn ahom_stage(run: &mut Run) -> Result<AHomEstimate, StageError> {
    let (law, d, plan, tol) = (run.law(), run.dim(), run.config.ahom.clone(), run.config.tolerances.cell);
    run.stage("ahom", |out| {
        let jobs: Vec<(i64, u64)> = plan.sides.iter().flat_map(|&l| plan.seeds.iter().map(move |&s| (l, s))).collect();
        let results: Vec<_> = jobs.par_iter().map(|&(side, seed)| estimate_cell(&law, d, side, seed, tol)).collect();
        let completed: Vec<CellEstimate> = results.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
        out.write_table("ahom_cells.csv", &cell_table(d, &completed))?;
        if let Some(err) = results.into_iter().find_map(|r| r.err()) {
            return Err(err.into());
        }
        let est = summarize_cells(&law, d, &plan.sides, &plan.seeds, completed)?;
        let side = est.estimate.provenance().side;
        let torus_env = sample_environment(law.clone(), Geometry::torus(d, side / 2)?, plan.seeds[0])?;
        let summary = AhomSummary {
            matrix: rows(est.estimate.matrix()),
            d_eff: rows(&est.estimate.d_eff()),
            lambda_min: est.estimate.lambda_min(),
            asymmetry: est.estimate.asymmetry(),
            deviations: est.deviations.clone(),
            side_means: est.side_means.iter().map(|(l, m)| (*l, rows(m))).collect(),
            law: format!("{law:?}"),
            seeds: plan.seeds.clone(),
            side,
            truncation: est.estimate.provenance().truncation,
            nondegeneracy_bound: nondegeneracy_bound(&torus_env, 9)?,
        };
        out.write_json("ahom.json", &summary)?;
        Ok(est)
    })
}

/// `(d pi^2 / 4) prod_i cos(pi x_i / 2)`, the source whose solution for
/// `A = 2I` is the product of cosines.
fn manufactured_source(x: &[f64]) -> f64 {
    x.len() as f64 * PI * PI / 4.0 * x.iter().map(|t| (PI * t / 2.0).cos()).product::<f64>()
}

fn operator(run: &Run, env: &Environment, eps: Epsilon) -> LabResult<GridOperator> {
    let v = |x: &[f64]| run.config.potential.eval(x);
    let potential: Option<ContinuumFn> = if run.config.potential.is_none() { None } else { Some(&v) };
    Ok(assemble_operator(env, eps, potential)?)
}

fn poisson_convergence(run: &mut Run, epsilons: &[Epsilon]) -> Result<(), StageError> {
    let a = ahom_stage(run)?.estimate.matrix().clone();
    let grid = run.grid().map_err(|error| StageError { stage: "reference".into(), error })?;
    let potential = run.config.potential.clone();
    let reference: RefField = run.stage("reference", |_| {
        let v = |x: &[f64]| potential.eval(x);
        let prob = HomogenizedProblem { a, potential: if potential.is_none() { None } else { Some(&v) }, source: &manufactured_source, grid };
        Ok(homogenized_solve(&prob)?)
    })?;
    let jobs = cells(epsilons, &run.config.seeds);
    let n_max = largest_n(epsilons);
    let tol = run.config.tolerances.poisson;
    let d = run.dim();
    let errors: Vec<f64> = {
        let r: &Run = run;
        let computed: LabResult<Vec<f64>> = jobs
            .par_iter()
            .map(|&(eps, seed)| {
                let env = r.boxed_env(n_max, seed)?;
                let op = operator(r, &env, eps)?;
                let u = poisson_solve(&op, &restrict(&manufactured_source, eps, d), tol)?;
                Ok(embed(&u).l2_distance(&|x: &[f64]| reference.interpolate(x)))
            })
            .collect();
        let start = Instant::now();
        let out = computed.map_err(|error| StageError { stage: "lattice".into(), error });
        run.stages.push(StageTime { stage: "lattice".into(), seconds: start.elapsed().as_secs_f64() });
        out?
    };
    run.stage("write", |out| {
        let mut t = Table::new(&["epsilon", "seed", "error"]);
        for (&(eps, seed), &e) in jobs.iter().zip(&errors) {
            t.push(vec![eps.value().into(), seed.into(), e.into()]);
        }
        out.write_table("poisson.csv", &t)?;
        Ok(())
    })
}

fn spectral_convergence(run: &mut Run, epsilons: &[Epsilon]) -> Result<(), StageError> {
    let a = ahom_stage(run)?.estimate.matrix().clone();
    let grid = run.grid().map_err(|error| StageError { stage: "reference".into(), error })?;
    let k = run.config.spectral.k;
    let potential = run.config.potential.clone();
    let reference: Vec<f64> = run.stage("reference", |_| {
        let v = |x: &[f64]| potential.eval(x);
        Ok(homogenized_eigs(&a, if potential.is_none() { None } else { Some(&v) }, k, grid)?.values)
    })?;
    let jobs = cells(epsilons, &run.config.seeds);
    let n_max = largest_n(epsilons);
    let tol = run.config.tolerances.eigen;
    let dump = run.config.spectral.dump_operator;
    let start = Instant::now();
    let r: &Run = run;
    let computed: LabResult<Vec<_>> = jobs
        .par_iter()
        .map(|&(eps, seed)| {
            let env = r.boxed_env(n_max, seed)?;
            let op = operator(r, &env, eps)?;
            let pairs = eigs_smallest(&op, k, tol)?;
            let triplets = dump.then(|| {
                let mut t = Table::new(&["row", "col", "value"]);
                for (i, j, v) in op.matrix().triplets() {
                    t.push(vec![i.into(), j.into(), v.into()]);
                }
                t
            });
            Ok((pairs, triplets))
        })
        .collect();
    run.stages.push(StageTime { stage: "lattice".into(), seconds: start.elapsed().as_secs_f64() });
    let results = computed.map_err(|error| StageError { stage: "lattice".into(), error })?;
    run.stage("write", |out| {
        let mut t = Table::new(&["epsilon", "seed", "k", "lambda", "residual", "reference", "error"]);
        for (&(eps, seed), (pairs, triplets)) in jobs.iter().zip(&results) {
            for (i, ((&l, &res), &r)) in pairs.values.iter().zip(&pairs.residuals).zip(&reference).enumerate().take(k) {
                t.push(vec![eps.value().into(), seed.into(), (i + 1).into(), l.into(), res.into(), r.into(), (l - r).abs().into()]);
            }
            if let Some(tr) = triplets {
                out.write_table(&format!("operator_n{}_seed{}.csv", eps.n(), seed), tr)?;
            }
        }
        out.write_table("spectral.csv", &t)?;
        Ok(())
    })
}

fn moment_audit(run: &mut Run) -> Result<(), StageError> {
    let plan = run.config.moments.clone();
    let d = run.dim();
    let law = run.law();
    let seeds = run.config.seeds.clone();
    let jobs: Vec<(i64, u64)> = plan.sides.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let start = Instant::now();
    let r: &Run = run;
    let computed: LabResult<Vec<(Rows, Rows)>> = jobs
        .par_iter()
        .map(|&(n, seed)| {
            let env = r.boxed_env(n + plan.path_length as i64, seed)?;
            let region = Geometry::boxed(d, n)?;
            let mut moment_rows = Vec::new();
            for &p in &plan.exponents {
                let m = empirical_moment(&env, p, &region)?;
                let analytic = match law {
                    LawSpec::IidParetoLower { gamma } if p < 0.0 => pareto_negative_moment(gamma, -p),
                    LawSpec::Constant(c) => c.powf(p),
                    _ => f64::NAN,
                };
                moment_rows.push(vec![n.into(), seed.into(), p.into(), m.mean.into(), m.std_error.into(), m.count.into(), analytic.into()]);
            }
            let nodes = NodeBox { dim: d, radius: n - 1 };
            let plain = NuMeasure::on_box(&env, NuKind::Plain, nodes)?;
            let optimized = if d >= 2 { Some(NuMeasure::on_box(&env, NuKind::PathOptimized(plan.path_length), nodes)?) } else { None };
            let mut nu_rows = Vec::new();
            for &q in &plan.nu_exponents {
                nu_rows.push(vec![n.into(), seed.into(), "nu".into(), q.into(), averaged_norm(&plain.values, q)?.powf(q).into()]);
                if let Some(o) = &optimized {
                    nu_rows.push(vec![n.into(), seed.into(), format!("nu_{}", plan.path_length).into(), q.into(), averaged_norm(&o.values, q)?.powf(q).into()]);
                }
            }
            Ok((moment_rows, nu_rows))
        })
        .collect();
    run.stages.push(StageTime { stage: "moments".into(), seconds: start.elapsed().as_secs_f64() });
    let results = computed.map_err(|error| StageError { stage: "moments".into(), error })?;
    run.stage("write", |out| {
        let mut moments = Table::new(&["n", "seed", "exponent", "mean", "std_error", "count", "analytic"]);
        let mut nus = Table::new(&["n", "seed", "measure", "q", "moment"]);
        for (m, v) in results {
            m.into_iter().for_each(|row| moments.push(row));
            v.into_iter().for_each(|row| nus.push(row));
        }
        out.write_table("moments.csv", &moments)?;
        out.write_table("nu_moments.csv", &nus)?;
        let pq = plan.pq.map(|(p, q)| json!({ "p": p, "q": q, "d": d, "holds": 1.0 / p + 1.0 / q < 2.0 / d as f64 }));
        out.write_json("moments.json", &json!({ "law": format!("{law:?}"), "pq_condition": pq }))?;
        Ok(())
    })
}

fn audit(run: &mut Run, epsilons: &[Epsilon]) -> Result<(), StageError> {
    let plan = run.config.audit.clone();
    let n_max = largest_n(epsilons);
    let seeds = run.config.seeds.clone();
    let jobs: Vec<_> = seeds.iter().flat_map(|&s| plan.kinds.iter().map(move |&k| (s, k))).collect();
    let start = Instant::now();
    let r: &Run = run;
    let computed: LabResult<Vec<_>> = jobs
        .par_iter()
        .map(|&(seed, kind)| {
            let env = r.boxed_env(n_max, seed)?;
            let spec = AuditSpec::new(kind.kind(), epsilons.to_vec(), plan.q, plan.path_length, plan.trials, seed);
            Ok(inequality_audit(&env, &spec)?)
        })
        .collect();
    run.stages.push(StageTime { stage: "audit".into(), seconds: start.elapsed().as_secs_f64() });
    let reports = computed.map_err(|error| StageError { stage: "audit".into(), error })?;
    run.stage("write", |out| {
        let mut t = Table::new(&["seed", "kind", "epsilon", "input", "ratio"]);
        let mut summary = Vec::new();
        for (&(seed, _), rep) in jobs.iter().zip(&reports) {
            for p in &rep.points {
                t.push(vec![seed.into(), rep.kind.name().into(), p.eps.value().into(), p.input.label().into(), p.ratio.into()]);
            }
            summary.push(json!({
                "seed": seed,
                "kind": rep.kind.name(),
                "epsilons": rep.epsilons,
                "ratios": rep.ratios,
                "relative_changes": rep.relative_changes(),
                "max_ratio": rep.max_ratio,
                "argmax_input": rep.argmax_input.label(),
                "argmax_input_digest": format!("{:016x}", rep.argmax_input_digest),
            }));
        }
        out.write_table("audit.csv", &t)?;
        out.write_json("audit.json", &summary)?;
        Ok(())
    })
}

fn trap_demo(run: &mut Run, epsilons: &[Epsilon]) -> Result<(), StageError> {
    let trap = run.config.trap.clone();
    let jobs = cells(epsilons, &run.config.seeds);
    let tol = run.config.tolerances.eigen;
    let (law, d) = (run.law(), run.dim());
    let start = Instant::now();
    let computed: LabResult<Vec<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(eps, seed)| {
            let geometry = Geometry::boxed(d, eps.n() as i64)?;
            let plain = sample_environment(law.clone(), geometry.clone(), seed)?;
            let trapped = trap_environment(law.clone(), geometry, trap.m, trap.delta, seed)?;
            let lambda = |env: &Environment| -> LabResult<f64> { Ok(eigs_smallest(&assemble_operator(env, eps, None)?, 1, tol)?.values[0]) };
            Ok((lambda(&trapped)?, lambda(&plain)?))
        })
        .collect();
    run.stages.push(StageTime { stage: "eigen".into(), seconds: start.elapsed().as_secs_f64() });
    let values = computed.map_err(|error| StageError { stage: "eigen".into(), error })?;
    run.stage("write", |out| {
        let mut t = Table::new(&["epsilon", "seed", "lambda_trapped", "lambda_untrapped", "ratio"]);
        for (&(eps, seed), &(tr, pl)) in jobs.iter().zip(&values) {
            t.push(vec![eps.value().into(), seed.into(), tr.into(), pl.into(), (pl / tr).into()]);
        }
        out.write_table("trap.csv", &t)?;
        Ok(())
    })
}

fn ldp_cumulant(run: &mut Run) -> Result<(), StageError> {
    let a = ahom_stage(run)?.estimate.matrix().clone();
    let grid = run.grid().map_err(|error| StageError { stage: "target".into(), error })?;
    let potential = run.config.potential.clone();
    let plan = run.config.ldp.clone();
    let target = run.stage("target", |_| {
        if potential.is_none() {
            return Ok(None);
        }
        Ok(Some(cumulant_target(&a, &|x: &[f64]| potential.eval(x), grid)?))
    })?;
    let alphas: Vec<f64> = plan.times.iter().map(|t| t.powf(plan.alpha_exponent)).collect();
    let n_env = alphas.iter().fold(2.0f64, |m, a| m.max(a.ceil())) as i64 + 1;
    let jobs: Vec<(usize, u64)> = (0..plan.times.len()).flat_map(|i| run.config.seeds.iter().map(move |&s| (i, s))).collect();
    let start = Instant::now();
    let r: &Run = run;
    let computed: LabResult<Vec<_>> = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let env = r.boxed_env(n_env, seed)?;
            let v = |x: &[f64]| potential.eval(x);
            let pot: Option<ContinuumFn> = if potential.is_none() { None } else { Some(&v) };
            Ok(lattice_cumulant(&env, pot, plan.times[i], alphas[i])?)
        })
        .collect();
    run.stages.push(StageTime { stage: "cumulant".into(), seconds: start.elapsed().as_secs_f64() });
    let estimates = computed.map_err(|error| StageError { stage: "cumulant".into(), error })?;
    run.stage("write", |out| {
        let mut t = Table::new(&["t", "seed", "alpha_t", "Lambda_t", "target", "gap", "warning"]);
        for (&(_, seed), e) in jobs.iter().zip(&estimates) {
            let target_value = target.map_or(0.0, |tg| tg.value);
            let gap = if target_value == 0.0 { f64::NAN } else { (e.value - target_value).abs() / target_value.abs() };
            let warning = if e.warnings.contains(&CumulantWarning::AlphaNotSmall) { "alpha-not-small" } else { "" };
            t.push(vec![e.t.into(), seed.into(), e.alpha.into(), e.value.into(), target_value.into(), gap.into(), warning.into()]);
        }
        out.write_table("cumulant.csv", &t)?;
        Ok(())
    })
}
