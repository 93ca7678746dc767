use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("noise level {0} is below the admissible minimum {min}", min = crate::schedule::MIN_SIGMA)]
    NonPositiveSigma(f64),
    #[error("noise levels must be strictly increasing")]
    NotSorted,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("invalid beta range: need 0 < beta_min < beta_max < 1 and at least one step")]
    InvalidBetaRange,
    #[error("delta must be positive and finite, got {0}")]
    NonPositiveDelta(f64),
    #[error("subspaces need {needed} ambient dimensions but only {available} are available")]
    DimensionOverflow { needed: usize, available: usize },
    #[error("overlapping subspaces are only supported for two classes of equal dimension")]
    OverlapUnsupported,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("closed-form expression requires equal subspace dimensions and uniform mixing weights")]
    InvalidForUnequalDims,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {0} has no samples")]
    ClassMissing(usize),
    #[error("rank {rank} exceeds the available dimension {available}")]
    RankTooLarge { rank: usize, available: usize },
    #[error("curve needs at least 3 points, got {0}")]
    CurveTooShort(usize),
    #[error("training labels contain a single class")]
    SingleClassBatch,
    #[error("ensemble members and feature batches disagree on noise levels")]
    LevelMismatch,
    #[error("feature batches are not aligned sample by sample")]
    SampleMisalignment,
    #[error("probe has not been trained")]
    UntrainedModel,
}

pub type Result<T> = std::result::Result<T, Error>;
