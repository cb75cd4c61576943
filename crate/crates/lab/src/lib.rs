//! Experiment runner, output formats and plotting on top of `rcmhom-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod plot;

pub use config::ExperimentConfig;
pub use error::{LabError, LabResult};
pub use experiments::run;
pub use output::RunManifest;
