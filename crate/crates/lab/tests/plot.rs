use std::path::Path;

use rcmhomlab::config::ExperimentConfig;
use rcmhomlab::plot::{emit_plot, PlotSpec};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn empty_series_is_an_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "empty.csv", "epsilon,error\n");
    let spec = PlotSpec::parse("x=epsilon,y=error").unwrap();
    assert_eq!(emit_plot(&csv, &spec).unwrap_err().exit_code(), 2);
    assert!(!dir.path().join("empty.svg").exists());
}

#[test]
fn missing_column_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "t.csv", "epsilon,error\n0.5,1\n0.25,0.5\n");
    let spec = PlotSpec::parse("x=epsilon,y=residual").unwrap();
    assert!(emit_plot(&csv, &spec).is_err());
    assert!(!dir.path().join("t.svg").exists());
}

#[test]
fn monotone_series_gives_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "t.csv", "epsilon,error\n0.5,1\n0.25,0.5\n0.125,0.25\n");
    let summary = emit_plot(&csv, &PlotSpec::parse("x=epsilon,y=error,scale=semilogy,title=a<b").unwrap()).unwrap();
    let svg = std::fs::read_to_string(&summary.path).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("a&lt;b"));
    assert_eq!(summary.series[0].points.len(), 3);
}

#[test]
fn spectral_slope_is_about_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ExperimentConfig::from_toml(
        r#"
experiment = "spectral-convergence"
dimension = 2
epsilons = [0.125, 0.0625, 0.03125]
seeds = [1, 2]
output_dir = "unused"
law = { kind = "constant", value = 1.0 }
ahom = { sides = [8], seeds = [1] }
"#,
    )
    .unwrap();
    c.output_dir = dir.path().to_path_buf();
    rcmhomlab::run(&c).unwrap();
    let spec = PlotSpec::parse("x=epsilon,y=error,scale=loglog,group=k").unwrap();
    let summary = emit_plot(&dir.path().join("spectral.csv"), &spec).unwrap();
    assert!(std::fs::metadata(&summary.path).unwrap().len() > 0);
    let slope = summary.series[0].slope.unwrap();
    assert!((0.8..=2.2).contains(&slope), "{slope}");
}
