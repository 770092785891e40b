use thiserror::Error;

/// Errors raised across the library.
///
/// Variants are grouped by [`ErrorClass`] so front-ends can map them onto
/// distinct exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no admissible Lax shock connects the requested states: {0}")]
    NoAdmissibleShock(String),
    #[error("characteristic speeds are complex or repeated at {0:?}")]
    ComplexOrRepeatedEigenvalues(Vec<f64>),
    #[error("shock-frame characteristic speed {speed} vanishes at {state:?}")]
    ZeroShockFrameSpeed { state: Vec<f64>, speed: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shooting failed to connect the endstates: {0}")]
    NoConnection(String),
    #[error(
        "domain half-width {halfwidth} too small: tail mismatch {mismatch:e} exceeds {tolerance:e}"
    )]
    DomainTooSmall {
        halfwidth: f64,
        mismatch: f64,
        tolerance: f64,
    },
    #[error("shift {delta} outside the supported range |delta| < {limit}")]
    ShiftOutOfRange { delta: f64, limit: f64 },
    #[error("profile tail is at the floating-point noise floor")]
    TailAtNoiseFloor,

    #[error("time {0} is outside the supported range t >= 0")]
    NonpositiveTime(f64),
    #[error("diffusion coefficient {0} must be positive")]
    NonpositiveBeta(f64),

    #[error("time step {dt} violates the CFL bound {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("solution blew up at t = {t}: max deviation {value:e}")]
    BlowUp { t: f64, value: f64 },
    #[error("viscosity matrix must be constant across the profile for the implicit solver")]
    VariableViscosity,

    #[error(
        "outgoing directions and the shift direction do not span the state space (det = {0:e})"
    )]
    DegenerateBasis(f64),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("envelope vanishes where the residual does not: {0}")]
    EnvelopeVanishes(String),
    #[error("norm series is at the noise floor")]
    NormAtNoiseFloor,
    #[error("quadrature did not converge: estimated error {error:e} vs value {value:e}")]
    QuadratureNonconvergent { value: f64, error: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

/// Coarse grouping used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Numerical,
}

impl ErrorClass {
    /// Process exit code: 2 for usage/config errors, 3 for numerical ones.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Numerical => 3,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::Io(_) | Error::InvalidParameter(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Numerical,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
