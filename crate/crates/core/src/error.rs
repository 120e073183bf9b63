use thiserror::Error;

use crate::lattice::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A descriptor or config field failed validation. `field` names it.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("m cannot be calibrated for delta = {delta}: the window mass is zero or too small")]
    NonCalibratable { delta: f64 },

    #[error("law has negative essential infimum {essinf}; first-passage weights must be nonnegative")]
    NegativeWeight { essinf: f64 },

    #[error("point {0:?} lies outside the lattice box")]
    OutsideBox(Point),

    #[error("target {to:?} is not reachable from {from:?} by a directed path")]
    NotOrdered { from: Point, to: Point },

    #[error("growth ball reached the box boundary at t = {t}")]
    BallHitsBoundary { t: f64 },

    #[error("affinity unavailable: {0}")]
    AffinityUnavailable(String),

    #[error("support violation: atom {atom} of q lies outside the support of p")]
    SupportViolation { atom: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("incompatible configuration: {0}")]
    Incompatible(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
