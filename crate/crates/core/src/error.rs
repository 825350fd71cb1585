use thiserror::Error;

/// Reason a data set was rejected as geometrically degenerate.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    /// Line of sight too close to a celestial pole.
    PoleSingularity,
    /// `|W₁₂|²` below threshold: `D₁` and `D₂` (nearly) parallel or vanishing.
    SmallW12,
    /// Both tangential pivots vanish (`r₁·D₂ = 0` or `D₁ = 0`).
    SmallPivot,
    /// `r₁·D₂` vanishes, so the redundancy identity cannot be normalised.
    SmallR1D2,
}

impl std::fmt::Display for Degeneracy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Degeneracy::PoleSingularity => "line of sight at a pole",
            Degeneracy::SmallW12 => "|W12|^2 below threshold",
            Degeneracy::SmallPivot => "tangential pivots Q1_100 and Q1_010 both vanish",
            Degeneracy::SmallR1D2 => "r1.D2 vanishes",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum OdError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(Degeneracy),

    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),

    #[error("no convergence after {iterations} iterations ({what})")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("all polynomial coefficients are zero")]
    AllCoefficientsZero,

    #[error("no accepted solutions")]
    NoAcceptedSolutions,

    #[error("singular jacobian (condition number {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("singular covariance: {0}")]
    SingularCovariance(&'static str),

    #[error("synthetic geometry rejected: {0}")]
    GeometryRejected(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = OdError> = std::result::Result<T, E>;

impl From<serde_json::Error> for OdError {
    fn from(e: serde_json::Error) -> Self {
        OdError::Parse(e.to_string())
    }
}

impl From<csv::Error> for OdError {
    fn from(e: csv::Error) -> Self {
        OdError::Parse(e.to_string())
    }
}
