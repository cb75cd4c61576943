use std::f64::consts::PI;
use std::path::Path;

use rcmhomlab::config::ExperimentConfig;
use rcmhomlab::output::sha256_hex;
use rcmhomlab::run;

fn config(dir: &Path, body: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_toml(body).unwrap();
    c.output_dir = dir.to_path_buf();
    c
}

fn column(csv: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv).unwrap();
    let i = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[i].parse().unwrap()).collect()
}

const CONSTANT_2D: &str = r#"
dimension = 2
epsilons = [0.125, 0.0625, 0.03125]
seeds = [1]
output_dir = "unused"
law = { kind = "constant", value = 1.0 }
ahom = { sides = [8], seeds = [1] }
"#;

#[test]
fn poisson_errors_approach_the_step_embedding_floor() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), &format!("experiment = \"poisson-convergence\"\n{CONSTANT_2D}"));
    let manifest = run(&c).unwrap();
    assert!(manifest.failure.is_none());
    let errors = column(&dir.path().join("poisson.csv"), "error");
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    // For u = cos(pi x/2) cos(pi y/2) the lattice solution is second order
    // accurate at the nodes, so the L2 distance is dominated by replacing u
    // with its node values on each cell: eps * |grad u| / sqrt(12).
    for (e, eps) in errors.iter().zip([0.125, 0.0625, 0.03125]) {
        let floor = eps * (PI * PI / 2.0 / 12.0).sqrt();
        assert!((e / floor - 1.0).abs() < 0.02, "{e} vs {floor}");
    }
}

#[test]
fn spectral_matches_the_discrete_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(dir.path(), &format!("experiment = \"spectral-convergence\"\n{CONSTANT_2D}\n[tolerances]\neigen = 1e-10\n"));
    run(&c).unwrap();
    let csv = dir.path().join("spectral.csv");
    for (lambda, eps) in column(&csv, "lambda").iter().zip(column(&csv, "epsilon")) {
        let exact = 2.0 * 4.0 / (eps * eps) * (PI * eps / 4.0).sin().powi(2);
        assert!((lambda - exact).abs() <= 1e-9, "{lambda} vs {exact}");
    }
    let (lambda, reference, error) = (column(&csv, "lambda"), column(&csv, "reference"), column(&csv, "error"));
    for i in 0..lambda.len() {
        assert!((reference[i] - PI * PI / 2.0).abs() <= 1e-6, "{}", reference[i]);
        assert_eq!(error[i], (lambda[i] - reference[i]).abs());
    }
}

#[test]
fn reruns_are_bit_identical_and_digests_match() {
    let body = r#"
experiment = "inequality-audit"
dimension = 2
epsilons = [0.125, 0.0625]
seeds = [3, 4]
output_dir = "unused"
law = { kind = "pareto", gamma = 0.6 }
"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run(&config(a.path(), body)).unwrap();
    let mb = run(&config(b.path(), body)).unwrap();
    assert!(!ma.outputs.is_empty());
    for (ra, rb) in ma.outputs.iter().zip(&mb.outputs) {
        assert_eq!(ra.path, rb.path);
        assert_eq!(ra.sha256, rb.sha256);
    }
    for rec in &ma.outputs {
        let bytes = std::fs::read(a.path().join(&rec.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), rec.sha256);
        assert_eq!(bytes.len(), rec.bytes);
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), ma.outputs.len());
}

#[test]
fn solver_failure_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(dir.path(), &format!("experiment = \"poisson-convergence\"\n{CONSTANT_2D}"));
    c.tolerances.poisson = 1e-300;
    let manifest = run(&c).unwrap();
    let failure = manifest.failure.expect("tolerance is unreachable");
    assert_eq!(failure.stage, "lattice");
    assert_eq!(failure.exit_code, 3);
    let names: Vec<&str> = manifest.outputs.iter().map(|o| o.path.as_str()).collect();
    assert_eq!(names, ["ahom_cells.csv", "ahom.json"]);
    assert!(dir.path().join("manifest.json").is_file());
    assert!(!dir.path().join("poisson.csv").exists());
}

#[test]
fn trap_demo_separates_trapped_and_plain_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
experiment = "trap-demo"
dimension = 2
epsilons = [0.0625]
seeds = [1]
output_dir = "unused"
law = { kind = "constant", value = 1.0 }
"#;
    run(&config(dir.path(), body)).unwrap();
    let ratio = column(&dir.path().join("trap.csv"), "ratio");
    assert!(ratio[0] >= 1e3, "{ratio:?}");
}
