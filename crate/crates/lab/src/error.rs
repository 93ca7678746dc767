use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("CSV schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("posterior dump needs exactly three classes, got {0}")]
    WrongClassCount(usize),
    #[error(transparent)]
    Core(#[from] molrg_core::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl LabError {
    /// Process exit code: 2 for a bad request, 3 for a failure while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::UnknownExperiment(_) | LabError::InvalidSpec(_) | LabError::WrongClassCount(_) => 2,
            _ => 3,
        }
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
