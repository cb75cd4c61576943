use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcmhomlab::config::{Experiment, ExperimentConfig};
use rcmhomlab::plot::{emit_plot, PlotSpec};
use rcmhomlab::{LabError, LabResult, RunManifest};

/// Sets the size of the worker pool; unset means one thread per core.
const THREADS_VAR: &str = "RCMHOMLAB_THREADS";

#[derive(Parser)]
#[command(name = "rcmhomlab", version, about = "Numerical studies of homogenization in random conductance models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a config file.
    Run { config: PathBuf },
    /// Draw a line chart from an emitted CSV table.
    Plot {
        csv: PathBuf,
        /// TOML file or inline `x=..,y=..,scale=loglog|semilogy|semilogx|linear[,group=..][,title=..][,out=..]`.
        spec: String,
    },
    /// Estimate the homogenized matrix for the law in a config file.
    Ahom { config: PathBuf },
    /// Run the inequality audit (or the moment audit if the config names it).
    Audit { config: PathBuf },
}

fn configure_threads() -> LabResult<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| LabError::validation(format!("{THREADS_VAR} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| LabError::validation(e.to_string()))
}

fn run_as(path: &Path, experiment: Option<Experiment>) -> LabResult<RunManifest> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(e) = experiment {
        config.experiment = e;
        config.validate()?;
    }
    rcmhomlab::run(&config)
}

fn report(manifest: &RunManifest) -> u8 {
    for out in &manifest.outputs {
        println!("{}  {}", out.sha256, out.path);
    }
    match &manifest.failure {
        Some(f) => {
            eprintln!("rcmhomlab: {} failed in stage `{}`: {}", manifest.experiment, f.stage, f.message);
            f.exit_code
        }
        None => 0,
    }
}

fn main_inner(cli: Cli) -> LabResult<u8> {
    configure_threads()?;
    let manifest = match cli.command {
        Command::Run { config } => run_as(&config, None)?,
        Command::Ahom { config } => run_as(&config, Some(Experiment::AhomEstimate))?,
        Command::Audit { config } => {
            let named = ExperimentConfig::load(&config)?.experiment;
            run_as(&config, (named != Experiment::MomentAudit).then_some(Experiment::InequalityAudit))?
        }
        Command::Plot { csv, spec } => {
            let summary = emit_plot(&csv, &PlotSpec::parse(&spec)?)?;
            for s in &summary.series {
                match s.slope {
                    Some(m) => println!("{}: slope {m:.6}", s.label),
                    None => println!("{}: {} point(s)", s.label, s.points.len()),
                }
            }
            println!("wrote {}", summary.path.display());
            return Ok(0);
        }
    };
    Ok(report(&manifest))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rcmhomlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
