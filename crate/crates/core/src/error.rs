use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index has empty support")]
    EmptySupport,

    #[error("invalid lattice box: {0}")]
    InvalidBox(String),

    #[error("invalid perturbation term: {0}")]
    InvalidPerturbation(String),

    #[error("eps = {eps} is outside the domain of the M formula (need 0 < eps < exp(-e))")]
    EpsTooLarge { eps: f64 },

    #[error("resonant key {0} (beta == gamma) handed to the homological solver")]
    ResonantTerm(String),

    #[error("small divisor {divisor:e} below threshold {threshold:e} for k = {k}")]
    SmallDivisorViolation { k: String, divisor: f64, threshold: f64 },

    #[error("stage {stage}: coefficient of {key} exceeds its theoretical bound (ratio {ratio:e})")]
    BoundViolation { stage: usize, key: String, ratio: f64 },

    #[error("generator flow integration failed: {0}")]
    FlowIntegrationFailure(String),

    #[error("key {0} is not single-site action-only")]
    NotDiagonal(String),

    #[error("integration unstable at t = {time}: relative energy jump {jump:e} per step")]
    StepUnstable { time: f64, jump: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
