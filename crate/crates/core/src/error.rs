use thiserror::Error;

/// Errors raised by the kinematics, sensing and design routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ShapeError {
    #[error("arc length {s} outside [0, {length}]")]
    Domain { s: f64, length: f64 },

    #[error("invalid interval [{from}, {to}] on a segment of length {length}")]
    Interval { from: f64, to: f64, length: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("string {string} path is not realizable (tangent margin {margin:.3e} at s = {s:.4})")]
    NotRealizable { string: usize, margin: f64, s: f64 },

    #[error("singular design: noise amplification {aleph:.3e} (sigma ratio {ratio:.3e})")]
    SingularDesign { aleph: f64, ratio: f64 },

    #[error("underdetermined: {measurements} measurements for {coefficients} modal coefficients")]
    Underdetermined {
        measurements: usize,
        coefficients: usize,
    },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("no sign change of the collision residual in the search bracket")]
    NoBracket,

    #[error("admissible-sample acceptance rate {rate:.2e} is too low; rescale the sampling box")]
    LowAcceptance { rate: f64 },

    #[error("empty admissible sample set")]
    EmptySamples,

    #[error("shooting did not converge after {iterations} iterations (residual {residual:.3e})")]
    ShootingDivergence { iterations: usize, residual: f64 },

    #[error("design space has {size} designs, above the cap of {cap}")]
    TooManyDesigns { size: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, ShapeError>;
