use thiserror::Error;

/// Errors raised by the geometric and numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Speed fell below [`crate::geometry::V_MIN`], so the velocity frame is undefined.
    #[error("degenerate velocity: |v| = {speed:e} is below the frame threshold")]
    DegenerateVelocity { speed: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("curve is singular at s = {s} (|r'| vanishes)")]
    SingularCurve { s: f64 },

    /// The modulus equation could not be continued; `[s_lo, s_hi]` is the interval that was reached.
    #[error("nu blew up: solution only reached [{s_lo}, {s_hi}] ({reason})")]
    NuBlowup { s_lo: f64, s_hi: f64, reason: String },

    #[error("partial derivative {0} is unavailable or not finite")]
    MissingPartial(&'static str),

    #[error("unknown catalogue entry '{0}'")]
    UnknownCatalogueEntry(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("singular denominator at v = {v}, theta = {theta}")]
    SingularDenominator { v: f64, theta: f64 },

    #[error("t = {t} lies outside the admissible interval [{lo}, {hi}]")]
    OutOfInterval { t: f64, lo: f64, hi: f64 },

    #[error("quadrature is singular at theta = {theta}: {reason}")]
    SingularQuadrature { theta: f64, reason: String },

    /// An integrator error raised while building a shift grid, annotated with its location.
    #[error("shift trajectory at s = {s} failed: {source}")]
    ShiftFailure { s: f64, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;
