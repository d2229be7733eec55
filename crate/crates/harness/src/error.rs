use std::path::PathBuf;

use thiserror::Error;

use distill_core::distill::DistillError;
use distill_core::mdp::MdpError;
use distill_core::teacher::TeacherError;
use distill_core::verify::VerifyError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("group {group:?} has {runs} run(s); at least 2 are needed")]
    InsufficientRuns { group: String, runs: usize },
    #[error("curve area {area} is not positive after removing the initial return")]
    DegenerateCurve { area: f64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
