use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QkzError {
    #[error("argument {re}{im:+}i is within tolerance of a pole")]
    PoleProximity { re: f64, im: f64 },
    #[error("logarithm requested at a zero of the double sine ({re}{im:+}i)")]
    ZeroProximity { re: f64, im: f64 },
    #[error("shift reduction needs {steps} steps (limit 10000)")]
    NonconvergentReduction { steps: i64 },
    #[error("invalid periods: {0}")]
    InvalidPeriods(String),
    #[error("invalid nu vector: {0}")]
    InvalidNu(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate spectral parameter: {0}")]
    DegenerateSpectral(String),
    #[error("unresolved pinch: {0}")]
    UnresolvedPinch(String),
    #[error("contour leaves the admissible band: {0}")]
    BandOverflow(String),
    #[error("quadrature tolerance not met: {0}")]
    ToleranceNotMet(String),
    #[error("outside the convergence domain: {0}")]
    DomainViolation(String),
    #[error("permutation sum too large: {0}")]
    PermutationLimit(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl QkzError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            QkzError::ToleranceNotMet(_)
            | QkzError::UnresolvedPinch(_)
            | QkzError::BandOverflow(_)
            | QkzError::NonconvergentReduction { .. }
            | QkzError::PoleProximity { .. }
            | QkzError::ZeroProximity { .. }
            | QkzError::DegenerateSpectral(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, QkzError>;
