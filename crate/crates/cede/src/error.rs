use thiserror::Error;

/// Errors surfaced by the solver library.
#[derive(Debug, Error)]
pub enum CedeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-monotone distortion table: {0}")]
    NonMonotoneTable(String),

    #[error("integral does not stabilize under domain extension: {0}")]
    DivergentIntegral(String),

    #[error("quadrature failed to meet tolerance: {0}")]
    NumericalFailure(String),

    #[error("distortion ratio is indeterminate on too much of (0,1): {0}")]
    ProfileIndeterminate(String),

    #[error("unsupported distortion-ratio shape: {0}")]
    UnsupportedShape(String),

    #[error("grid too large: {0} evaluations requested")]
    GridTooLarge(u64),

    #[error("no feasible multiplier in the search box: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CedeError>;
