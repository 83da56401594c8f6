use thiserror::Error;

use crate::hilbert::Representation;

/// Errors raised by the state, generator, path and analysis layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid dimension {dim} must be even and at least {min}")]
    InvalidDimension { dim: usize, min: usize },

    #[error("grid extent must be positive and finite, got {0}")]
    InvalidExtent(f64),

    #[error("width {width} is not resolvable on a grid with spacing {spacing} (need >= {required})")]
    Unresolved { width: f64, spacing: f64, required: f64 },

    #[error("state centred at {center} with width {width} clips the grid edge at +/-{half_extent}")]
    BoundaryViolation { center: f64, width: f64, half_extent: f64 },

    #[error("boundary mass {mass:e} outside the central region exceeds {limit:e}{}", step_suffix(*step))]
    BoundaryMass { mass: f64, limit: f64, step: Option<usize> },

    #[error("operation expects the {expected:?} representation, state is in {found:?}")]
    RepresentationMismatch { expected: Representation, found: Representation },

    #[error("states live on different grids")]
    SpaceMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("theta = {theta} is outside the open interval (2pi, 4pi)")]
    ThetaOutOfRange { theta: f64 },

    #[error("spread prediction diverges at theta = {theta} (|tan(theta/4)| = {tan_abs:e})")]
    SpreadDivergent { theta: f64, tan_abs: f64 },

    #[error("N = {n} is below the resolution threshold n_min = {n_min}")]
    BelowResolution { n: usize, n_min: usize },

    #[error("oracle cap exceeded: N = {n} > {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("operation requires the {0} regime")]
    WrongRegime(&'static str),

    #[error("one-sided density: lobe mass {mass:.3e} below floor {floor}")]
    SingleLobe { mass: f64, floor: f64 },

    #[error(
        "step {step} is not a whole number of grid spacings ({ratio} spacings) and an f64 walk \
         would lose ~{digits:.0} digits to cancellation"
    )]
    IncommensurateStep { step: f64, ratio: f64, digits: f64 },

    #[error("N values {0:?} have no common commensurate grid (each N must be a perfect square)")]
    NoCommonGrid(Vec<usize>),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn step_suffix(step: Option<usize>) -> String {
    match step {
        Some(s) => format!(" at walk step {s}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
