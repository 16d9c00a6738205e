use thiserror::Error;

use crate::qcore::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state is not normalized: norm² = {norm_sqr} (tolerance {tolerance:e})")]
    NotNormalized { norm_sqr: f64, tolerance: f64 },

    #[error("unknown basis label `{0}`")]
    UnknownLabel(String),

    /// A normalization constraint between parameters was violated, e.g. |d|²+|e|² ≠ 1.
    #[error("constraint violated: {constraint} = {value} (expected 1 within {tolerance:e})")]
    Constraint {
        constraint: String,
        value: f64,
        tolerance: f64,
    },

    #[error("absorber set is incomplete: Born weights sum to {total}")]
    IncompleteAbsorber { total: f64 },

    #[error("all transaction weights are zero")]
    AllZeroWeights,

    #[error(
        "state lies outside the entangler image (residual {residual:e}); it cannot be recohered"
    )]
    OutsideImage { residual: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "insufficient fringe resolution: pixel pitch {pitch} exceeds 1/8 of fringe period {period}"
    )]
    InsufficientFringeResolution { pitch: f64, period: f64 },

    #[error("central region holds only {periods:.2} fringe periods (need at least 3)")]
    TooFewFringes { periods: f64 },

    #[error("operator is not a valid density operator: {0}")]
    NotDensity(ValidationReport),
}

pub type Result<T> = std::result::Result<T, Error>;
