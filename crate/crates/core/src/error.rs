use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// No cell/snapshot pair lies inside the cylinder.
    EmptyCylinder,
    /// The cylinder (or the ball carrying the cutoff) leaves the grid box.
    CylinderOutside,
    /// All cutoff weights vanished.
    ZeroWeight,
    /// A state component lies outside the closed domain box.
    DomainViolation { component: usize, value: f64 },
    BadCoefficients(String),
    /// Condition estimate of a matrix that must be inverted is too large.
    IllConditioned { condition: f64 },
    NonFiniteMatrix,
    NoAdmissibleEpsilon { best_margin: f64, best_epsilon: f64 },
    MissingComparisonFunctions,
    NewtonDiverged { iterations: usize, residual: f64 },
    PositivityLost { halvings: usize },
    LinearSolveFailed(String),
    DimensionMismatch { expected: usize, found: usize },
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyCylinder => write!(f, "cylinder covers no cell/snapshot pair"),
            Error::CylinderOutside => write!(f, "cylinder is not contained in the grid box"),
            Error::ZeroWeight => write!(f, "all cutoff weights vanish"),
            Error::DomainViolation { component, value } => {
                write!(f, "component {component} = {value} is outside the domain box")
            }
            Error::BadCoefficients(msg) => write!(f, "bad coefficients: {msg}"),
            Error::IllConditioned { condition } => {
                write!(f, "matrix is ill conditioned (condition estimate {condition:e})")
            }
            Error::NonFiniteMatrix => write!(f, "matrix has non-finite entries"),
            Error::NoAdmissibleEpsilon { best_margin, best_epsilon } => write!(
                f,
                "no admissible gluing parameter (best margin {best_margin:e} at epsilon {best_epsilon:e})"
            ),
            Error::MissingComparisonFunctions => {
                write!(f, "model provides no near-diagonal comparison functions")
            }
            Error::NewtonDiverged { iterations, residual } => write!(
                f,
                "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
            ),
            Error::PositivityLost { halvings } => {
                write!(f, "damping exhausted after {halvings} halvings, iterate leaves the domain box")
            }
            Error::LinearSolveFailed(msg) => write!(f, "linear solve failed: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
