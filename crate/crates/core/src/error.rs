use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("surface index {index} out of range for a {dim}-level potential")]
    SurfaceIndex { index: usize, dim: usize },

    #[error("non-finite potential value at x = {x}")]
    NonFinitePotential { x: f64 },

    #[error(
        "eigenvalues {lower} and {upper} are nearly degenerate at x = {x} (gap {gap:e}); \
         surface derivative is not defined"
    )]
    DegenerateSurface {
        x: f64,
        lower: usize,
        upper: usize,
        gap: f64,
    },

    #[error("dense eigensolver did not converge for a {size}x{size} matrix (max |H_ij| = {max_abs:e})")]
    EigenNoConvergence { size: usize, max_abs: f64 },

    #[error("Boltzmann integrals underflow at T = {temperature}; shift the potential by its minimum")]
    PartitionUnderflow { temperature: f64 },

    #[error("time {tau} is not an integer multiple of the step {dt}")]
    StepMismatch { tau: f64, dt: f64 },

    #[error("Langevin state became non-finite at step {step}")]
    NonFiniteState { step: usize },

    #[error("correlation trace has imaginary part {imag:e} relative to real part {real:e}")]
    NonRealTrace { real: f64, imag: f64 },

    #[error("phase-space grid is not admissible for M = {mass}: {reason}")]
    Inadmissible { mass: f64, reason: String },

    #[error("fit requires at least two positive data points, got {0}")]
    DegenerateFit(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {value}")))
    }
}
