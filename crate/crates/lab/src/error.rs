use std::path::PathBuf;

/// Failures of the experiment runner, grouped by CLI exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// Bad configuration or input file; exit code 2.
    #[error("invalid input: {0}")]
    Validation(String),
    /// A numerical stage failed; exit code 3.
    #[error("solver failure: {0}")]
    Solver(#[from] rcmhom_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl LabError {
    pub fn validation(msg: impl Into<String>) -> LabError {
        LabError::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> LabError {
        LabError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Validation(_) => 2,
            LabError::Solver(_) => 3,
            LabError::Io { .. } => 1,
        }
    }
}

pub type LabResult<T> = Result<T, LabError>;
