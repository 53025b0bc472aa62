use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field contains non-finite samples")]
    NonFinite,
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("support overflow: {0}")]
    SupportOverflow(String),
    #[error("scale below lattice resolution: {0}")]
    BelowResolution(String),
    #[error("dense oracle limited to {cap} degrees of freedom, got {dof}")]
    SizeCap { dof: usize, cap: usize },
    #[error("spectrum outside the closed right half-plane: {0}")]
    SpectrumViolation(String),
    #[error("decay fit needs at least 4 points spanning a factor 4, {0}")]
    InsufficientSpread(String),
    #[error("sets are not separated: {0}")]
    NotSeparated(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
