use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("resolution too small: {0}")]
    ResolutionTooSmall(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coordinate {value} outside [0, 1]")]
    Domain { value: f64 },

    #[error("nonpositive density (min = {min:e})")]
    NonpositiveDensity { min: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("singular Jacobian at node {node} (det = {det:e})")]
    SingularJacobian { node: usize, det: f64 },

    #[error("map inversion did not converge at node {node} (residual {residual:e} after {iterations} iterations)")]
    InversionFailed {
        node: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("flow map no longer invertible: min det = {min_det:e}, |grad X - I| = {deviation:e}")]
    MapNoninvertible { min_det: f64, deviation: f64 },

    #[error("compatibility condition violated: mean of f1 is {mean:e}")]
    Compatibility { mean: f64 },

    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),

    #[error("dense realization too large: {0}")]
    TooLarge(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
