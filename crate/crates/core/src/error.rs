use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid axis: {0}")]
    InvalidAxis(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("loss must be scalar-shaped, got {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("batch reduction count {0} is too small for batch statistics (need >= 2)")]
    DegenerateBatch(usize),
    #[error("regularized Gram matrix is numerically singular (condition estimate {0:.3e})")]
    SingularSystem(f64),
    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),
    #[error("video has {frames} frames, need at least {min}")]
    TooShort { frames: usize, min: usize },
    #[error("epoch {epoch} outside [0, {total})")]
    InvalidEpoch { epoch: usize, total: usize },
    #[error("need at least {k} samples for {k}-fold split, got {n}")]
    TooFewSamples { n: usize, k: usize },
    #[error("target {0} is not strictly positive")]
    NonPositiveTarget(f64),
    #[error("gradient check failed: {0}")]
    GradcheckFailure(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
