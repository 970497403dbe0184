use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate denominator |v*w| = {value:e} at node {index}")]
    DegenerateDenominator { index: usize, value: f64 },

    #[error("grid needs at least 3 nodes, got {0}")]
    GridTooSmall(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("gamma quadratic has no admissible root (discriminant {discriminant:e} below margin)")]
    GammaBranchCollision { discriminant: f64 },

    #[error("quadrature did not converge (estimate {estimate}, error {error:e})")]
    QuadratureNotConverged { estimate: f64, error: f64 },

    #[error("evaluation at u = {u} is too close to the background pole u = a")]
    PoleAtBackground { u: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("{what} left its admissible range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("quadratic has complex roots (discriminant {discriminant:e})")]
    ComplexRoots { discriminant: f64 },

    #[error("resolvent near-singular at lambda = {lambda} (condition estimate {condition:e}, distance to spectrum ~{distance:e})")]
    NearSingularResolvent {
        lambda: Complex64,
        condition: f64,
        distance: f64,
    },

    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoRootInBracket { lo: f64, hi: f64 },

    #[error("singular matrix (zero pivot at row {row})")]
    SingularMatrix { row: usize },

    #[error("blow-up detected: max|u| = {max_u:e}")]
    BlowUpDetected { max_u: f64 },

    #[error("positivity lost in species {species} at node {index}")]
    PositivityLost { species: char, index: usize },

    #[error("simulation failed at t = {t}: {source}")]
    SimulationFailed { t: f64, source: Box<Error> },

    #[error("continuation step failed at D_v = {dv} after {retries} retries")]
    StepFailure { dv: f64, retries: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
