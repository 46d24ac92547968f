use thiserror::Error;

/// Every failure the laboratory can report.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: achieved error {achieved:.3e}, target {target:.3e}")]
    Quadrature { achieved: f64, target: f64 },

    #[error("covariance matrix is not positive definite after jitter (pivot {pivot}, value {value:.3e})")]
    Conditioning { pivot: usize, value: f64 },

    #[error("nonlinear iteration failed at time step {step} (t = {t:.6}, residual {residual:.3e})")]
    PdeNonConvergence { step: usize, t: f64, residual: f64 },

    #[error("point x = {x} lies outside the solution domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("value {value} lies outside the range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("monotonicity violated: {0}")]
    Monotonicity(String),

    #[error("density undefined: g({at}) = {value} is not positive")]
    DensityUndefined { at: f64, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("search failed: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> LabError {
    LabError::InvalidParameter { name: name.to_string(), reason: reason.into() }
}

/// Rejects anything that is not a finite number.
pub(crate) fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be finite, got {v}")))
    }
}
